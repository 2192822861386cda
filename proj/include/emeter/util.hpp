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

/*! @file
 * @brief Error type, text tokenizing and number formatting shared by all modules
 */

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace emeter
{

//! @brief microseconds on the measurement clock
using Micros = std::int64_t;

//! @brief All data and contract errors raised by the library
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

//! @brief Raised on malformed input text; the message carries "<source>:<line>: "
class SyntaxError : public Error
{
public:
    SyntaxError(const std::string& source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": syntax error: " + what)
    {
    }
};

namespace detail
{

inline std::string_view trim(std::string_view s)
{
    const char* ws = " \t\r\n";
    auto        b  = s.find_first_not_of(ws);
    if (b == std::string_view::npos) { return {}; }
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

//! @brief split on runs of whitespace
inline std::vector<std::string_view> tokenize(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t                   i = 0;
    while (i < s.size())
    {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) { ++i; }
        if (i >= s.size()) { break; }
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') { ++j; }
        out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

//! @brief split on a single delimiter, keeping empty fields
inline std::vector<std::string_view> split(std::string_view s, char delim)
{
    std::vector<std::string_view> out;
    std::size_t                   start = 0;
    while (true)
    {
        auto pos = s.find(delim, start);
        if (pos == std::string_view::npos)
        {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

//! @brief strip a trailing '#' comment
inline std::string_view stripComment(std::string_view line)
{
    auto pos = line.find('#');
    return pos == std::string_view::npos ? line : line.substr(0, pos);
}

template<class T>
bool parseNumber(std::string_view s, T& value)
{
    if (s.empty()) { return false; }
    if (s.front() == '+') { s.remove_prefix(1); }
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) { return false; }
    if constexpr (std::is_floating_point_v<T>) { return std::isfinite(value); }
    return true;
}

//! @brief fixed-point formatting with the given number of fractional digits, "-0" normalized to "0"
inline std::string fixed(double v, int digits = 6)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    std::string s(buf);
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) { s.erase(0, 1); }
    return s;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

//! @brief 64-bit FNV-1a
class Fnv1a
{
public:
    void update(std::string_view bytes)
    {
        for (unsigned char c : bytes)
        {
            hash_ ^= c;
            hash_ *= 0x100000001b3ULL;
        }
    }
    std::uint64_t value() const { return hash_; }

private:
    std::uint64_t hash_{0xcbf29ce484222325ULL};
};

inline std::uint64_t fnv1a(std::string_view bytes)
{
    Fnv1a h;
    h.update(bytes);
    return h.value();
}

inline std::string readFile(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) { throw Error("cannot open " + path); }
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) { throw Error("read failure on " + path); }
    return ss.str();
}

//! @brief names appear as fields of '|', ';', '=', ',' and ':' separated formats
inline bool isValidName(std::string_view name)
{
    if (name.empty()) { return false; }
    for (char c : name)
    {
        if (c <= ' ' || c == '|' || c == ';' || c == '=' || c == ',' || c == ':' || c == '#') { return false; }
    }
    return true;
}

} // namespace detail
} // namespace emeter
