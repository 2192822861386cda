/*
 * MIT License
 *
 * Copyright (c) 2026 The emeter authors
 *
 * Permission is hereby granted, free of charge, to any person obtaining a copy
 * of this software and associated documentation files (the "Software"), to deal
 * in the Software without restriction, including without limitation the rights
 * to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
 * copies of the Software, and to permit persons to whom the Software is
 * furnished to do so, subject to the following conditions:
 *
 * The above copyright notice and this permission notice shall be included in all
 * copies or substantial portions of the Software.
 *
 * THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
 * IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
 * FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
 * AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
 * LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
 * OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
 * SOFTWARE.
 */


#include <gtest/gtest.h>

#include "emeter/util.hpp"

using namespace emeter;
using namespace emeter::detail;

TEST(Util, Fnv1aKnownVectors)
{
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
    Fnv1a h;
    h.update("foo");
    h.update("bar");
    EXPECT_EQ(h.value(), fnv1a("foobar"));
    EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Util, ParseNumber)
{
    double d = 0;
    EXPECT_TRUE(parseNumber(std::string_view("+1.5"), d));
    EXPECT_EQ(d, 1.5);
    EXPECT_FALSE(parseNumber(std::string_view("1.5x"), d));
    EXPECT_FALSE(parseNumber(std::string_view(""), d));
    EXPECT_FALSE(parseNumber(std::string_view("nan"), d));
    EXPECT_FALSE(parseNumber(std::string_view("inf"), d));
    int i = 0;
    EXPECT_TRUE(parseNumber(std::string_view("-3"), i));
    EXPECT_EQ(i, -3);
    unsigned u = 0;
    EXPECT_FALSE(parseNumber(std::string_view("-3"), u));
}

TEST(Util, FixedFormatting)
{
    EXPECT_EQ(fixed(3000.0), "3000.000000");
    EXPECT_EQ(fixed(-0.0), "0.000000");
    EXPECT_EQ(fixed(-1e-9), "0.000000");
    EXPECT_EQ(fixed(0.1234567), "0.123457");
}

TEST(Util, SplitKeepsEmptyFields)
{
    auto f = split("a||b|", '|');
    ASSERT_EQ(f.size(), 4u);
    EXPECT_EQ(f[1], "");
    EXPECT_EQ(f[3], "");
    auto t = tokenize("  a \t b  ");
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[1], "b");
    EXPECT_EQ(trim(stripComment("x y # z")), "x y");
}

TEST(Util, Names)
{
    EXPECT_TRUE(isValidName("MomentumEnergy"));
    EXPECT_TRUE(isValidName("step-1.a"));
    EXPECT_FALSE(isValidName(""));
    EXPECT_FALSE(isValidName("a b"));
    EXPECT_FALSE(isValidName("a|b"));
    EXPECT_FALSE(isValidName("a:b"));
}

TEST(Util, SyntaxErrorFormat)
{
    SyntaxError e("f.txt", 7, "bad thing");
    EXPECT_STREQ(e.what(), "f.txt:7: syntax error: bad thing");
    EXPECT_THROW(readFile("/nonexistent/emeter"), Error);
}
