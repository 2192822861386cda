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

#include <random>
#include <set>

#include "fixtures.hpp"

using namespace emeter;
using emeter::test::lumiTopology;
using emeter::test::cscsTopology;

namespace
{

std::string errorOf(const std::function<void()>& f)
{
    try
    {
        f();
    }
    catch (const std::exception& e)
    {
        return e.what();
    }
    return "";
}

//! random valid topology: 1-3 nodes, 1-4 cards, 1-2 gcds, optional memory and energy counters
Topology randomTopology(std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> nodesD(1, 3), cardsD(1, 4), gcdD(1, 2), coin(0, 1), cpusD(1, 2);
    unsigned                           gcds  = unsigned(gcdD(rng));
    int                                nodes = nodesD(rng);
    std::vector<std::string>           names;
    std::vector<SensorMeta>            sensors;
    std::map<int, RankPlacement>       ranks;
    int                                rank = 0;
    for (int n = 0; n < nodes; ++n)
    {
        std::string name = "nid" + std::to_string(n);
        names.push_back(name);
        int width = coin(rng) ? 32 : 0;
        sensors.push_back({{name, DeviceKind::Node, 0}, width ? SensorMode::CumulativeEnergy : SensorMode::Power, width, {}});
        if (coin(rng)) { sensors.push_back({{name, DeviceKind::Memory, 0}, SensorMode::Power, 0, {}}); }
        int cards = cardsD(rng);
        sensors.push_back({{name, DeviceKind::Cpu, 0}, SensorMode::Power, 0, {}});
        for (int c = 0; c < cards; ++c)
        {
            sensors.push_back({{name, DeviceKind::GpuCard, unsigned(c)}, SensorMode::Power, 0, {}});
            for (unsigned g = 0; g < gcds; ++g)
            {
                ranks[rank++] = {name, unsigned(c), g};
            }
        }
    }
    return Topology(names, sensors, ranks, gcds);
}

} // namespace

TEST(Topology, LumiLikeCardsSharedByTwoRanks)
{
    auto topo = lumiTopology();
    EXPECT_EQ(topo.ranks().size(), 8u);
    EXPECT_EQ(topo.gcdsPerCard(), 2u);
    int cards = 0;
    for (const auto& s : topo.sensors())
    {
        if (s.id.kind != DeviceKind::GpuCard) { continue; }
        ++cards;
        ASSERT_EQ(s.sharedByRanks.size(), 2u);
        EXPECT_EQ(s.sharedByRanks[0], int(2 * s.id.index));
        EXPECT_EQ(s.sharedByRanks[1], int(2 * s.id.index + 1));
    }
    EXPECT_EQ(cards, 4);
}

TEST(Topology, CscsLikeCardsUnshared)
{
    auto topo = cscsTopology();
    for (const auto& s : topo.sensors())
    {
        if (s.id.kind == DeviceKind::GpuCard) { EXPECT_EQ(s.sharedByRanks, std::vector<int>{int(s.id.index)}); }
        if (s.id.kind == DeviceKind::Cpu) { EXPECT_EQ(s.sharedByRanks.size(), 4u); }
    }
    EXPECT_FALSE(topo.hasKind("cscs0", DeviceKind::Memory));
}

TEST(Topology, EmptyRanksIsInvariantViolation)
{
    EXPECT_EQ(errorOf([] { parseTopology("node a\nsensor a node 0 power 0\n"); }), "invariant violation: no ranks");
}

TEST(Topology, InvariantViolationsNameTheInvariant)
{
    const std::string base = "node a\nsensor a node 0 power 0\nsensor a gpu 0 power 0\n";
    EXPECT_NE(errorOf([&] { parseTopology(base + "rank 0 a 0 0\nrank 2 a 1 0\n"); }).find("dense"), std::string::npos);
    EXPECT_NE(errorOf([&] { parseTopology(base + "rank 0 a 0 0\nrank 1 b 0 0\n"); }).find("unknown node"), std::string::npos);
    EXPECT_NE(errorOf([&] { parseTopology(base + "rank 0 a 0 1\n"); }).find("gcds_per_card"), std::string::npos);
    EXPECT_NE(errorOf([&] { parseTopology(base + "gcds_per_card 2\nrank 0 a 0 0\nrank 1 a 0 0\n"); }).find("slot"),
              std::string::npos);
    EXPECT_NE(errorOf([&] { parseTopology(base + "sensor a gpu 3 power 0\nrank 0 a 0 0\n"); }).find("not driven"),
              std::string::npos);
    EXPECT_NE(errorOf([&] { parseTopology(base + "sensor a node 0 power 0\nrank 0 a 0 0\n"); }).find("duplicate sensor"),
              std::string::npos);
    EXPECT_NE(errorOf([&] { parseTopology("node a\nsensor a node 0 power 16\nrank 0 a 0 0\n"); }).find("counter width"),
              std::string::npos);
    EXPECT_NE(errorOf([&] { parseTopology("node a\nrank 0 a 0 0\n"); }).find("exactly one node sensor"),
              std::string::npos);
    EXPECT_NE(errorOf([&] { parseTopology(base + "gcds_per_card 0\nrank 0 a 0 0\n"); }).find("invariant violation"),
              std::string::npos);
}

TEST(Topology, SyntaxErrorsAreLineNumbered)
{
    EXPECT_EQ(errorOf([] { parseTopology("node a\n\nsensor a fan 0 power 0\n", "t.topo"); }),
              "t.topo:3: syntax error: unknown sensor kind 'fan'");
    EXPECT_EQ(errorOf([] { parseTopology("# c\nbogus\n", "t.topo"); }), "t.topo:2: syntax error: unknown directive 'bogus'");
    EXPECT_EQ(errorOf([] { parseTopology("node\n", "t.topo"); }), "t.topo:1: syntax error: 'node' takes 1 arguments");
    EXPECT_NE(errorOf([] { parseTopology("rank x a 0 0\n"); }).find(":1: syntax error: bad rank id"), std::string::npos);
}

TEST(SensorsForRank, SharedCardOnLumi)
{
    auto topo = lumiTopology();
    auto r0   = sensorsForRank(topo, 0);
    auto r1   = sensorsForRank(topo, 1);
    EXPECT_EQ(r0, r1);
    ASSERT_EQ(r0.size(), 4u);
    EXPECT_EQ(r0[0].kind, DeviceKind::Node);
    EXPECT_EQ(r0[1].kind, DeviceKind::Cpu);
    EXPECT_EQ(r0[2].kind, DeviceKind::Memory);
    EXPECT_EQ(r0[3], (SensorId{"lumi0", DeviceKind::GpuCard, 0}));
    EXPECT_EQ(sensorsForRank(topo, 7)[3], (SensorId{"lumi0", DeviceKind::GpuCard, 3}));
}

TEST(SensorsForRank, CscsRankTwoOwnsCardTwo)
{
    auto topo = cscsTopology();
    auto s    = sensorsForRank(topo, 2);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s.back(), (SensorId{"cscs0", DeviceKind::GpuCard, 2}));
    const auto* meta = topo.find(s.back());
    ASSERT_NE(meta, nullptr);
    EXPECT_EQ(meta->sharedByRanks, std::vector<int>{2});
}

TEST(SensorsForRank, UnknownRank)
{
    EXPECT_EQ(errorOf([] { sensorsForRank(lumiTopology(), 99); }), "unknown rank 99");
}

TEST(SensorId, KeyRoundTrip)
{
    SensorId id{"nid001234", DeviceKind::GpuCard, 3};
    EXPECT_EQ(id.key(), "nid001234:gpu3");
    EXPECT_EQ(SensorId::fromKey(id.key()), id);
    EXPECT_FALSE(SensorId::fromKey("nid:fan0"));
    EXPECT_FALSE(SensorId::fromKey("gpu0"));
    EXPECT_FALSE(SensorId::fromKey("n:gpu"));
}

TEST(TopologyProperty, RenderParseRoundTripAndSharing)
{
    std::mt19937_64 rng(42);
    for (int i = 0; i < 200; ++i)
    {
        auto topo = randomTopology(rng);
        auto text = renderTopology(topo);
        auto back = parseTopology(text);
        ASSERT_EQ(back, topo) << text;
        ASSERT_EQ(renderTopology(back), text);
        ASSERT_EQ(topologyDigest(back), topologyDigest(topo));

        std::set<SensorId> covered;
        for (const auto& [rank, place] : topo.ranks())
        {
            for (const auto& s : sensorsForRank(topo, rank))
            {
                covered.insert(s);
            }
        }
        for (const auto& s : topo.sensors())
        {
            if (!s.sharedByRanks.empty()) { ASSERT_TRUE(covered.count(s.id)) << s.id.key(); }
            if (s.id.kind == DeviceKind::GpuCard) { ASSERT_EQ(s.sharedByRanks.size(), topo.gcdsPerCard()); }
        }
    }
}

TEST(TopologyDigest, ChangesWithContent)
{
    EXPECT_NE(topologyDigest(lumiTopology()), topologyDigest(test::cscsTwinTopology()));
    EXPECT_EQ(topologyDigest(lumiTopology()), topologyDigest(parseTopology(renderTopology(lumiTopology()))));
}
