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
 * @brief Per-device energy attribution with shared-sensor deduplication
 *
 * Every rank on a node reports the node, Cpu and Memory sensors, and every rank on a card reports
 * that card's sensor. Summing records naively counts those sensors once per rank; dedupe counts
 * each physical sensor once.
 */

#pragma once

#include <numeric>

#include "meter.hpp"

namespace emeter
{

//! @brief relative disagreement between ranks on a shared sensor above which it is flagged
inline constexpr double sharedSensorTolerance = 0.01;

//! @brief negative "other" energy below this share of the node total clamps to zero
inline constexpr double otherClampTolerance = 0.01;

struct DedupeResult
{
    std::map<SensorId, double> energyJ;
    //! one entry per shared sensor on which ranks disagreed beyond tolerance
    std::vector<std::string> inconsistencies;
};

/*! @brief Records not enclosed by another record of the same rank
 *
 * Nested regions re-measure energy already counted by their parent, whole-run totals sum these only.
 */
inline std::vector<RegionRecord> topLevel(const std::vector<RegionRecord>& records)
{
    std::map<int, std::vector<const RegionRecord*>> byRank;
    for (const auto& r : records)
    {
        byRank[r.rank].push_back(&r);
    }
    std::vector<RegionRecord> out;
    for (auto& [rank, recs] : byRank)
    {
        std::sort(recs.begin(), recs.end(),
                  [](const RegionRecord* a, const RegionRecord* b)
                  { return a->startUs != b->startUs ? a->startUs < b->startUs : a->endUs > b->endUs; });
        Micros coveredUntil = std::numeric_limits<Micros>::min();
        for (const auto* r : recs)
        {
            if (r->endUs <= coveredUntil) { continue; }
            out.push_back(*r);
            coveredUntil = std::max(coveredUntil, r->endUs);
        }
    }
    return out;
}

/*! @brief Total energy per physical sensor, counting each shared sensor once
 *
 * Per rank the records' energies are summed; across the ranks reporting a sensor the largest
 * total is kept. Interpolation at region boundaries only ever loses energy, so the largest
 * concurrent reading is the closest to the truth. Records should not overlap within a rank.
 */
inline DedupeResult dedupe(const std::vector<RegionRecord>& records, const Topology* topo = nullptr)
{
    std::map<SensorId, std::map<int, double>> perRank;
    for (const auto& r : records)
    {
        for (const auto& [sensor, joules] : r.energyJ)
        {
            if (topo && !topo->find(sensor))
            {
                throw Error("record " + std::to_string(r.rank) + "/" + std::to_string(r.seq) + " references sensor " +
                            sensor.key() + " missing from the topology");
            }
            perRank[sensor][r.rank] += joules;
        }
    }

    DedupeResult result;
    for (const auto& [sensor, ranks] : perRank)
    {
        double lo = std::numeric_limits<double>::infinity();
        double hi = 0;
        for (const auto& [rank, joules] : ranks)
        {
            lo = std::min(lo, joules);
            hi = std::max(hi, joules);
        }
        if (hi > 0 && (hi - lo) / hi > sharedSensorTolerance)
        {
            result.inconsistencies.push_back("ranks disagree on shared sensor " + sensor.key() + ": " +
                                             detail::fixed(lo) + " J vs " + detail::fixed(hi) + " J, using the larger");
        }
        result.energyJ[sensor] = hi;
    }
    return result;
}

struct NodeBreakdown
{
    std::string           node;
    double                gpuJ{0};
    double                cpuJ{0};
    std::optional<double> memoryJ;
    double                otherJ{0};
    double                nodeTotalJ{0};

    double fraction(double joules) const { return nodeTotalJ > 0 ? joules / nodeTotalJ : 0.0; }
};

struct DeviceBreakdown
{
    std::vector<NodeBreakdown> nodes;
    double                     gpuJ{0};
    double                     cpuJ{0};
    double                     memoryJ{0};
    bool                       hasMemory{false};
    double                     otherJ{0};
    double                     totalJ{0};
    std::vector<std::string>   warnings;

    double fraction(double joules) const { return totalJ > 0 ? joules / totalJ : 0.0; }
};

/*! @brief Sum deduplicated sensor energies by device kind and derive "other" per node
 *
 * other = node - gpu - cpu - memory. Nodes without a Memory sensor fold memory into other.
 */
inline DeviceBreakdown breakdownFromSensors(const std::map<SensorId, double>& energyJ, const Topology& topo)
{
    DeviceBreakdown out;
    for (const auto& node : topo.nodes())
    {
        NodeBreakdown nb;
        nb.node = node;
        if (topo.hasKind(node, DeviceKind::Memory)) { nb.memoryJ = 0.0; }
        for (const auto& s : topo.sensors())
        {
            if (s.id.node != node) { continue; }
            auto   it = energyJ.find(s.id);
            double e  = it == energyJ.end() ? 0.0 : it->second;
            switch (s.id.kind)
            {
                case DeviceKind::Node: nb.nodeTotalJ += e; break;
                case DeviceKind::Cpu: nb.cpuJ += e; break;
                case DeviceKind::Memory: *nb.memoryJ += e; break;
                case DeviceKind::GpuCard: nb.gpuJ += e; break;
            }
        }
        nb.otherJ = nb.nodeTotalJ - nb.gpuJ - nb.cpuJ - nb.memoryJ.value_or(0.0);
        if (nb.otherJ < 0)
        {
            if (nb.otherJ < -otherClampTolerance * nb.nodeTotalJ)
            {
                throw Error("inconsistent sensors on node " + node + ": devices exceed node total by " +
                            detail::fixed(-nb.otherJ) + " J");
            }
            out.warnings.push_back("node " + node + ": other energy " + detail::fixed(nb.otherJ) +
                                   " J clamped to 0");
            nb.otherJ = 0;
        }
        out.gpuJ += nb.gpuJ;
        out.cpuJ += nb.cpuJ;
        out.memoryJ += nb.memoryJ.value_or(0.0);
        out.hasMemory = out.hasMemory || nb.memoryJ.has_value();
        out.otherJ += nb.otherJ;
        out.totalJ += nb.nodeTotalJ;
        out.nodes.push_back(nb);
    }
    return out;
}

inline DeviceBreakdown deviceBreakdown(const std::vector<RegionRecord>& records, const Topology& topo)
{
    auto dd  = dedupe(records, &topo);
    auto out = breakdownFromSensors(dd.energyJ, topo);
    out.warnings.insert(out.warnings.begin(), dd.inconsistencies.begin(), dd.inconsistencies.end());
    return out;
}

struct CardSplit
{
    std::vector<double> perRankJ;
    //! set when the card is shared, the even split is then an estimate
    bool approximate{false};
};

/*! @brief Even split of a card's energy over the k ranks driving its GCDs
 *
 * The last share absorbs the rounding so the shares sum back to the card energy exactly.
 */
inline CardSplit splitCardEnergy(double cardEnergyJ, unsigned k)
{
    if (k < 1) { throw Error("split_card_energy needs at least one rank"); }
    CardSplit out;
    out.approximate = k > 1;
    out.perRankJ.assign(k, cardEnergyJ / k);
    double assigned = 0;
    for (unsigned i = 0; i + 1 < k; ++i)
    {
        assigned += out.perRankJ[i];
    }
    out.perRankJ.back() = cardEnergyJ - assigned;
    return out;
}

struct RankGpuEnergy
{
    double joules{0};
    bool   approximate{false};
};

//! @brief per-rank GPU energy: each card's deduplicated energy split evenly over the ranks sharing it
inline std::map<int, RankGpuEnergy> gpuEnergyPerRank(const std::vector<RegionRecord>& records, const Topology& topo)
{
    auto                         dd = dedupe(records, &topo);
    std::map<int, RankGpuEnergy> out;
    for (const auto& s : topo.sensors())
    {
        if (s.id.kind != DeviceKind::GpuCard || s.sharedByRanks.empty()) { continue; }
        auto   it    = dd.energyJ.find(s.id);
        auto   split = splitCardEnergy(it == dd.energyJ.end() ? 0.0 : it->second, unsigned(s.sharedByRanks.size()));
        for (std::size_t i = 0; i < s.sharedByRanks.size(); ++i)
        {
            out[s.sharedByRanks[i]] = {split.perRankJ[i], split.approximate};
        }
    }
    return out;
}

} // namespace emeter
