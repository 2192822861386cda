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
 * @brief Sensors, devices and the rank-to-hardware topology
 *
 * A topology file lists the nodes, the power sensors on each node and where every rank runs.
 * Sensor sharing is derived from rank placement: the Cpu, Memory and Node sensors of a node
 * are shared by every rank on it, a GpuCard sensor by the ranks driving one of its GCDs.
 */

#pragma once

#include <algorithm>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "util.hpp"

namespace emeter
{

enum class DeviceKind
{
    Node,
    Cpu,
    Memory,
    GpuCard
};

inline constexpr DeviceKind allDeviceKinds[] = {DeviceKind::Node, DeviceKind::Cpu, DeviceKind::Memory,
                                                DeviceKind::GpuCard};

inline std::string_view kindToken(DeviceKind kind)
{
    switch (kind)
    {
        case DeviceKind::Node: return "node";
        case DeviceKind::Cpu: return "cpu";
        case DeviceKind::Memory: return "memory";
        case DeviceKind::GpuCard: return "gpu";
    }
    return "?";
}

inline std::optional<DeviceKind> parseKind(std::string_view token)
{
    for (auto k : allDeviceKinds)
    {
        if (kindToken(k) == token) { return k; }
    }
    return std::nullopt;
}

enum class SensorMode
{
    Power,
    CumulativeEnergy
};

inline std::string_view modeToken(SensorMode mode) { return mode == SensorMode::Power ? "power" : "energy"; }

struct SensorId
{
    std::string node;
    DeviceKind  kind{DeviceKind::Node};
    unsigned    index{0};

    auto operator<=>(const SensorId&) const = default;
    bool operator==(const SensorId&) const  = default;

    //! @brief "<node>:<kind><index>", the key used in record files
    std::string key() const { return node + ":" + std::string(kindToken(kind)) + std::to_string(index); }

    static std::optional<SensorId> fromKey(std::string_view key)
    {
        auto colon = key.rfind(':');
        if (colon == std::string_view::npos || colon == 0) { return std::nullopt; }
        std::string_view rest = key.substr(colon + 1);
        auto             digit = rest.find_first_of("0123456789");
        if (digit == std::string_view::npos || digit == 0) { return std::nullopt; }
        auto kind = parseKind(rest.substr(0, digit));
        if (!kind) { return std::nullopt; }
        unsigned index = 0;
        if (!detail::parseNumber(rest.substr(digit), index)) { return std::nullopt; }
        return SensorId{std::string(key.substr(0, colon)), *kind, index};
    }
};

struct SensorMeta
{
    SensorId         id;
    SensorMode       mode{SensorMode::Power};
    int              counterWidthBits{0};
    std::vector<int> sharedByRanks;

    bool operator==(const SensorMeta&) const = default;
};

struct RankPlacement
{
    std::string node;
    unsigned    card{0};
    unsigned    gcd{0};

    bool operator==(const RankPlacement&) const = default;
};

struct PowerSample
{
    SensorId   sensor;
    Micros     tUs{0};
    double     value{0};
    SensorMode mode{SensorMode::Power};
};

class Topology
{
public:
    Topology() = default;

    //! @brief Build and validate; derives sharedByRanks from the rank placement
    Topology(std::vector<std::string> nodes, std::vector<SensorMeta> sensors, std::map<int, RankPlacement> ranks,
             unsigned gcdsPerCard)
        : nodes_(std::move(nodes))
        , sensors_(std::move(sensors))
        , ranks_(std::move(ranks))
        , gcdsPerCard_(gcdsPerCard)
    {
        deriveSharing();
        validate();
    }

    const std::vector<std::string>&     nodes() const { return nodes_; }
    const std::vector<SensorMeta>&      sensors() const { return sensors_; }
    const std::map<int, RankPlacement>& ranks() const { return ranks_; }
    unsigned                            gcdsPerCard() const { return gcdsPerCard_; }

    const SensorMeta* find(const SensorId& id) const
    {
        auto it = std::find_if(sensors_.begin(), sensors_.end(), [&](const SensorMeta& m) { return m.id == id; });
        return it == sensors_.end() ? nullptr : &*it;
    }

    std::optional<std::size_t> indexOf(const SensorId& id) const
    {
        for (std::size_t i = 0; i < sensors_.size(); ++i)
        {
            if (sensors_[i].id == id) { return i; }
        }
        return std::nullopt;
    }

    bool hasKind(const std::string& node, DeviceKind kind) const
    {
        return std::any_of(sensors_.begin(), sensors_.end(),
                           [&](const SensorMeta& m) { return m.id.node == node && m.id.kind == kind; });
    }

    bool operator==(const Topology&) const = default;

private:
    void deriveSharing()
    {
        for (auto& s : sensors_)
        {
            s.sharedByRanks.clear();
            for (const auto& [rank, place] : ranks_)
            {
                if (place.node != s.id.node) { continue; }
                if (s.id.kind == DeviceKind::GpuCard && place.card != s.id.index) { continue; }
                s.sharedByRanks.push_back(rank);
            }
        }
    }

    [[noreturn]] static void violation(const std::string& what) { throw Error("invariant violation: " + what); }

    void validate() const
    {
        if (gcdsPerCard_ < 1) { violation("gcds_per_card must be >= 1"); }
        if (ranks_.empty()) { violation("no ranks"); }

        std::set<std::string> nodeSet;
        for (const auto& n : nodes_)
        {
            if (!detail::isValidName(n)) { violation("invalid node name '" + n + "'"); }
            if (!nodeSet.insert(n).second) { violation("duplicate node " + n); }
        }

        std::set<SensorId>         seen;
        std::map<std::string, int> nodeSensors;
        for (const auto& s : sensors_)
        {
            if (!nodeSet.count(s.id.node)) { violation("sensor " + s.id.key() + " on unknown node"); }
            if (!seen.insert(s.id).second) { violation("duplicate sensor " + s.id.key()); }
            if (s.counterWidthBits != 0 && s.counterWidthBits != 32 && s.counterWidthBits != 64)
            {
                violation("counter width of " + s.id.key() + " must be 0, 32 or 64");
            }
            if (s.id.kind == DeviceKind::Node)
            {
                if (s.id.index != 0) { violation("node sensor " + s.id.key() + " must have index 0"); }
                nodeSensors[s.id.node]++;
            }
            if ((s.id.kind == DeviceKind::Cpu || s.id.kind == DeviceKind::GpuCard) && s.sharedByRanks.empty())
            {
                violation("sensor " + s.id.key() + " is not driven by any rank");
            }
        }
        for (const auto& n : nodes_)
        {
            if (nodeSensors[n] != 1) { violation("node " + n + " needs exactly one node sensor"); }
        }

        int expected = 0;
        std::set<std::tuple<std::string, unsigned, unsigned>> slots;
        std::map<std::pair<std::string, unsigned>, unsigned>  perCard;
        for (const auto& [rank, place] : ranks_)
        {
            if (rank != expected) { violation("rank ids must be dense from 0, missing " + std::to_string(expected)); }
            ++expected;
            if (!nodeSet.count(place.node))
            {
                violation("rank " + std::to_string(rank) + " on unknown node " + place.node);
            }
            if (place.gcd >= gcdsPerCard_)
            {
                violation("rank " + std::to_string(rank) + " gcd index " + std::to_string(place.gcd) +
                          " >= gcds_per_card");
            }
            if (!slots.insert({place.node, place.card, place.gcd}).second)
            {
                violation("rank " + std::to_string(rank) + " reuses card/gcd slot on " + place.node);
            }
            if (++perCard[{place.node, place.card}] > gcdsPerCard_)
            {
                violation("more ranks than gcds_per_card on card " + std::to_string(place.card));
            }
        }
    }

    std::vector<std::string>     nodes_;
    std::vector<SensorMeta>      sensors_;
    std::map<int, RankPlacement> ranks_;
    unsigned                     gcdsPerCard_{1};
};

/*! @brief Parse the line-oriented topology format
 *
 *   node <name>
 *   sensor <node> <node|cpu|memory|gpu> <index> <power|energy> <width_bits>
 *   rank <id> <node> <card_index> <gcd_index>
 *   gcds_per_card <n>
 */
inline Topology parseTopology(std::string_view text, const std::string& source = "<topology>")
{
    std::vector<std::string>     nodes;
    std::vector<SensorMeta>      sensors;
    std::map<int, RankPlacement> ranks;
    std::optional<unsigned>      gcds;

    std::size_t lineNo = 0;
    for (auto rawLine : detail::split(text, '\n'))
    {
        ++lineNo;
        auto tok = detail::tokenize(detail::stripComment(rawLine));
        if (tok.empty()) { continue; }
        auto fail = [&](const std::string& what) { throw SyntaxError(source, lineNo, what); };
        auto expectArgs = [&](std::size_t n)
        {
            if (tok.size() != n + 1) { fail("'" + std::string(tok[0]) + "' takes " + std::to_string(n) + " arguments"); }
        };

        if (tok[0] == "node")
        {
            expectArgs(1);
            nodes.emplace_back(tok[1]);
        }
        else if (tok[0] == "sensor")
        {
            expectArgs(5);
            SensorMeta m;
            m.id.node = std::string(tok[1]);
            auto kind = parseKind(tok[2]);
            if (!kind) { fail("unknown sensor kind '" + std::string(tok[2]) + "'"); }
            m.id.kind = *kind;
            if (!detail::parseNumber(tok[3], m.id.index)) { fail("bad sensor index '" + std::string(tok[3]) + "'"); }
            if (tok[4] == "power") { m.mode = SensorMode::Power; }
            else if (tok[4] == "energy") { m.mode = SensorMode::CumulativeEnergy; }
            else { fail("unknown sensor mode '" + std::string(tok[4]) + "'"); }
            if (!detail::parseNumber(tok[5], m.counterWidthBits)) { fail("bad counter width '" + std::string(tok[5]) + "'"); }
            sensors.push_back(std::move(m));
        }
        else if (tok[0] == "rank")
        {
            expectArgs(4);
            int           id = 0;
            RankPlacement p;
            if (!detail::parseNumber(tok[1], id) || id < 0) { fail("bad rank id '" + std::string(tok[1]) + "'"); }
            p.node = std::string(tok[2]);
            if (!detail::parseNumber(tok[3], p.card)) { fail("bad card index '" + std::string(tok[3]) + "'"); }
            if (!detail::parseNumber(tok[4], p.gcd)) { fail("bad gcd index '" + std::string(tok[4]) + "'"); }
            if (!ranks.emplace(id, p).second) { fail("duplicate rank " + std::to_string(id)); }
        }
        else if (tok[0] == "gcds_per_card")
        {
            expectArgs(1);
            unsigned n = 0;
            if (!detail::parseNumber(tok[1], n)) { fail("bad gcds_per_card '" + std::string(tok[1]) + "'"); }
            if (gcds) { fail("gcds_per_card given twice"); }
            gcds = n;
        }
        else { fail("unknown directive '" + std::string(tok[0]) + "'"); }
    }
    return Topology(std::move(nodes), std::move(sensors), std::move(ranks), gcds.value_or(1));
}

//! @brief Canonical rendering; parseTopology(renderTopology(t)) == t
inline std::string renderTopology(const Topology& topo)
{
    std::ostringstream os;
    os << "gcds_per_card " << topo.gcdsPerCard() << "\n";
    for (const auto& n : topo.nodes())
    {
        os << "node " << n << "\n";
    }
    for (const auto& s : topo.sensors())
    {
        os << "sensor " << s.id.node << " " << kindToken(s.id.kind) << " " << s.id.index << " " << modeToken(s.mode)
           << " " << s.counterWidthBits << "\n";
    }
    for (const auto& [rank, p] : topo.ranks())
    {
        os << "rank " << rank << " " << p.node << " " << p.card << " " << p.gcd << "\n";
    }
    return os.str();
}

inline std::uint64_t topologyDigest(const Topology& topo) { return detail::fnv1a(renderTopology(topo)); }

/*! @brief Sensors a rank observes, ordered Node, Cpu, Memory, GpuCard
 *
 * The GpuCard entry is the card the rank drives; it is absent when the node exposes no sensor for it.
 */
inline std::vector<SensorId> sensorsForRank(const Topology& topo, int rank)
{
    auto it = topo.ranks().find(rank);
    if (it == topo.ranks().end()) { throw Error("unknown rank " + std::to_string(rank)); }
    const auto& place = it->second;

    std::vector<SensorId> out;
    for (auto kind : allDeviceKinds)
    {
        std::vector<SensorId> ofKind;
        for (const auto& s : topo.sensors())
        {
            if (s.id.node != place.node || s.id.kind != kind) { continue; }
            if (kind == DeviceKind::GpuCard && s.id.index != place.card) { continue; }
            ofKind.push_back(s.id);
        }
        std::sort(ofKind.begin(), ofKind.end());
        out.insert(out.end(), ofKind.begin(), ofKind.end());
    }
    return out;
}

inline Topology loadTopology(const std::string& path) { return parseTopology(detail::readFile(path), path); }

} // namespace emeter
