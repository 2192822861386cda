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
 * @brief Post-hoc reports over run files
 *
 * Device and function breakdowns, validation against scheduler job accounting and the
 * energy-delay product across GPU frequencies. Every report renders as a fixed-width table
 * followed by machine-readable lines carrying the same numbers:
 *
 *   DEV|<node>|<kind>|<joules>|<fraction>
 *   FUNC|<region>|<kind>|<joules>|<fraction>
 *   EDP|<region-or-TOTAL>|<freq_mhz>|<energy_j>|<time_s>|<edp>|<normalized>
 *   VAL|<tool_j>|<job_j>|<setup_j>|<residual_j>|<ratio>
 */

#pragma once

#include <iomanip>

#include "attribution.hpp"
#include "tracefmt.hpp"

namespace emeter
{

//! @brief tool energy above job energy by more than this share is flagged
inline constexpr double validationTolerance = 0.01;

namespace detail
{

inline void requireTopology(const RunFile& run, const Topology& topo)
{
    if (run.header.topologyDigest != topologyDigest(topo))
    {
        throw Error("run " + run.header.runId + " was recorded against a different topology (digest mismatch)");
    }
}

inline void requireNonEmpty(const RunFile& run)
{
    if (run.records.empty()) { throw Error("empty run " + run.header.runId); }
}

//! @brief deduplicated node-level energy, the physical total of the covered span
inline double nodeEnergy(const std::vector<RegionRecord>& records)
{
    double total = 0;
    for (const auto& [sensor, joules] : dedupe(records).energyJ)
    {
        if (sensor.kind == DeviceKind::Node) { total += joules; }
    }
    return total;
}

inline std::vector<RegionRecord> recordsOf(const std::vector<RegionRecord>& records, const std::string& region)
{
    std::vector<RegionRecord> out;
    std::copy_if(records.begin(), records.end(), std::back_inserter(out),
                 [&](const RegionRecord& r) { return r.region == region; });
    return topLevel(out);
}

//! @brief ranks run concurrently: the per-rank sum of durations, maximized over ranks
inline double regionTime(const std::vector<RegionRecord>& records)
{
    std::map<int, double> perRank;
    for (const auto& r : records)
    {
        perRank[r.rank] += r.durationS;
    }
    double t = 0;
    for (const auto& [rank, s] : perRank)
    {
        t = std::max(t, s);
    }
    return t;
}

inline std::string pad(const std::string& s, std::size_t width, bool left = true)
{
    if (s.size() >= width) { return s; }
    return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

} // namespace detail

// ---------------------------------------------------------------------------------------------
// Device breakdown

inline DeviceBreakdown reportDevices(const RunFile& run, const Topology& topo)
{
    detail::requireTopology(run, topo);
    detail::requireNonEmpty(run);
    auto out = deviceBreakdown(topLevel(run.records), topo);
    if (!(out.totalJ > 0)) { throw Error("empty run " + run.header.runId + ": no node energy measured"); }
    return out;
}

inline std::string renderDeviceReport(const DeviceBreakdown& b)
{
    std::ostringstream table;
    std::ostringstream lines;
    table << detail::pad("node", 16) << detail::pad("device", 8) << detail::pad("energy_j", 20, false)
          << detail::pad("fraction", 12, false) << "\n";
    auto row = [&](const std::string& node, const std::string& kind, double joules, double fraction)
    {
        table << detail::pad(node, 16) << detail::pad(kind, 8) << detail::pad(detail::fixed(joules), 20, false)
              << detail::pad(detail::fixed(fraction), 12, false) << "\n";
        lines << "DEV|" << node << "|" << kind << "|" << detail::fixed(joules) << "|" << detail::fixed(fraction)
              << "\n";
    };
    for (const auto& n : b.nodes)
    {
        row(n.node, "gpu", n.gpuJ, n.fraction(n.gpuJ));
        row(n.node, "cpu", n.cpuJ, n.fraction(n.cpuJ));
        if (n.memoryJ) { row(n.node, "memory", *n.memoryJ, n.fraction(*n.memoryJ)); }
        row(n.node, "other", n.otherJ, n.fraction(n.otherJ));
        row(n.node, "total", n.nodeTotalJ, n.nodeTotalJ > 0 ? 1.0 : 0.0);
    }
    row("*", "gpu", b.gpuJ, b.fraction(b.gpuJ));
    row("*", "cpu", b.cpuJ, b.fraction(b.cpuJ));
    if (b.hasMemory) { row("*", "memory", b.memoryJ, b.fraction(b.memoryJ)); }
    row("*", "other", b.otherJ, b.fraction(b.otherJ));
    row("*", "total", b.totalJ, 1.0);
    return table.str() + lines.str();
}

// ---------------------------------------------------------------------------------------------
// Function breakdown

struct RegionEnergy
{
    std::string region;
    double      gpuJ{0};
    double      cpuJ{0};
    double      memoryJ{0};
    double      otherJ{0};
    double      totalJ{0};
    double      durationS{0};
    bool        top{false};
};

struct FunctionBreakdown
{
    //! sorted by descending total energy
    std::vector<RegionEnergy> regions;
    double                    runTotalJ{0};
    bool                      hasMemory{false};
    std::vector<std::string>  warnings;

    double share(double joules) const { return runTotalJ > 0 ? joules / runTotalJ : 0.0; }

    const RegionEnergy* find(const std::string& region) const
    {
        auto it = std::find_if(regions.begin(), regions.end(), [&](const RegionEnergy& r) { return r.region == region; });
        return it == regions.end() ? nullptr : &*it;
    }
};

/*! @brief Per-region, per-device energies with shares of the run's total energy
 *
 * Nested regions appear under their own name and also inside their parent, so region
 * energies of a nested run need not sum to the run total.
 */
inline FunctionBreakdown reportFunctions(const RunFile& run, const Topology& topo, std::size_t topK = 3)
{
    auto devices = reportDevices(run, topo);

    FunctionBreakdown out;
    out.runTotalJ = devices.totalJ;
    out.hasMemory = devices.hasMemory;
    out.warnings  = devices.warnings;

    std::set<std::string> names;
    for (const auto& r : run.records)
    {
        names.insert(r.region);
    }
    for (const auto& name : names)
    {
        auto recs = detail::recordsOf(run.records, name);
        auto b    = deviceBreakdown(recs, topo);
        for (auto& w : b.warnings)
        {
            out.warnings.push_back(name + ": " + w);
        }
        out.regions.push_back({name, b.gpuJ, b.cpuJ, b.memoryJ, b.otherJ, b.totalJ, detail::regionTime(recs), false});
    }
    std::stable_sort(out.regions.begin(), out.regions.end(),
                     [](const RegionEnergy& a, const RegionEnergy& b) { return a.totalJ > b.totalJ; });
    for (std::size_t i = 0; i < out.regions.size() && i < topK; ++i)
    {
        out.regions[i].top = true;
    }
    return out;
}

inline std::string renderFunctionReport(const FunctionBreakdown& f)
{
    std::ostringstream table;
    std::ostringstream lines;
    table << detail::pad("region", 28) << detail::pad("gpu_j", 16, false) << detail::pad("cpu_j", 16, false);
    if (f.hasMemory) { table << detail::pad("memory_j", 16, false); }
    table << detail::pad("other_j", 16, false) << detail::pad("total_j", 16, false) << detail::pad("share", 10, false)
          << detail::pad("time_s", 14, false) << "\n";
    for (const auto& r : f.regions)
    {
        table << detail::pad((r.top ? "[*] " : "    ") + r.region, 28) << detail::pad(detail::fixed(r.gpuJ), 16, false)
              << detail::pad(detail::fixed(r.cpuJ), 16, false);
        if (f.hasMemory) { table << detail::pad(detail::fixed(r.memoryJ), 16, false); }
        table << detail::pad(detail::fixed(r.otherJ), 16, false) << detail::pad(detail::fixed(r.totalJ), 16, false)
              << detail::pad(detail::fixed(f.share(r.totalJ)), 10, false)
              << detail::pad(detail::fixed(r.durationS), 14, false) << "\n";

        auto line = [&](const char* kind, double joules)
        {
            lines << "FUNC|" << r.region << "|" << kind << "|" << detail::fixed(joules) << "|"
                  << detail::fixed(f.share(joules)) << "\n";
        };
        line("gpu", r.gpuJ);
        line("cpu", r.cpuJ);
        if (f.hasMemory) { line("memory", r.memoryJ); }
        line("other", r.otherJ);
        line("total", r.totalJ);
    }
    return table.str() + lines.str();
}

// ---------------------------------------------------------------------------------------------
// Validation against job-level accounting

struct ValidationReport
{
    double toolTotalJ{0};
    double jobTotalJ{0};
    //! job energy before the first region starts
    double setupWindowJ{0};
    double ratio{0};
    double residualJ{0};
    bool   inconsistent{false};
};

/*! @brief Compare the instrumented total with the scheduler's whole-job energy
 *
 * The scheduler meters from job start, the instrumentation from the first region, so the
 * setup window is integrated from the node power trace and reported separately.
 */
inline ValidationReport validateAgainstJob(const RunFile& run, double jobTotalJ, Micros jobStartUs, Micros jobEndUs,
                                           const ReplayTrace& nodeTrace)
{
    detail::requireNonEmpty(run);
    Micros first = std::numeric_limits<Micros>::max();
    Micros last  = std::numeric_limits<Micros>::min();
    for (const auto& r : run.records)
    {
        first = std::min(first, r.startUs);
        last  = std::max(last, r.endUs);
    }
    if (jobStartUs > first || jobEndUs < last)
    {
        throw Error("job window [" + std::to_string(jobStartUs) + ", " + std::to_string(jobEndUs) +
                    "] us is smaller than the region span [" + std::to_string(first) + ", " + std::to_string(last) +
                    "] us");
    }
    if (!(jobTotalJ > 0)) { throw Error("job energy must be > 0"); }

    ValidationReport out;
    out.jobTotalJ  = jobTotalJ;
    out.toolTotalJ = detail::nodeEnergy(topLevel(run.records));
    bool anyNode   = false;
    for (const auto& [sensor, series] : nodeTrace.series())
    {
        if (sensor.kind != DeviceKind::Node) { continue; }
        anyNode = true;
        out.setupWindowJ += ReplayTrace::energyBetween(series, jobStartUs, first);
    }
    if (!anyNode) { throw Error("node power trace contains no node sensor"); }
    out.ratio        = out.toolTotalJ / out.jobTotalJ;
    out.residualJ    = out.jobTotalJ - out.toolTotalJ - out.setupWindowJ;
    out.inconsistent = out.toolTotalJ > out.jobTotalJ * (1.0 + validationTolerance);
    return out;
}

inline std::string renderValidationReport(const ValidationReport& v)
{
    std::ostringstream os;
    os << detail::pad("tool_j", 20) << detail::fixed(v.toolTotalJ) << "\n"
       << detail::pad("job_j", 20) << detail::fixed(v.jobTotalJ) << "\n"
       << detail::pad("setup_window_j", 20) << detail::fixed(v.setupWindowJ) << "\n"
       << detail::pad("residual_j", 20) << detail::fixed(v.residualJ) << "\n"
       << detail::pad("ratio", 20) << detail::fixed(v.ratio) << "\n";
    os << "VAL|" << detail::fixed(v.toolTotalJ) << "|" << detail::fixed(v.jobTotalJ) << "|"
       << detail::fixed(v.setupWindowJ) << "|" << detail::fixed(v.residualJ) << "|" << detail::fixed(v.ratio) << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------------------------
// Energy-delay product

struct EdpPoint
{
    double freqMhz{0};
    double energyJ{0};
    double timeS{0};
    double edp{0};
    double normalizedEdp{0};
};

namespace detail
{

inline std::vector<const RunFile*> sortedByFrequency(const std::vector<RunFile>& runs, double baselineMhz)
{
    std::vector<const RunFile*> out;
    std::set<double>            seen;
    bool                        haveBaseline = false;
    for (const auto& run : runs)
    {
        if (!run.header.frequencyMhz) { throw Error("run " + run.header.runId + " carries no frequency label"); }
        double f = *run.header.frequencyMhz;
        if (!seen.insert(f).second) { throw Error("duplicate frequency label " + fixed(f) + " MHz"); }
        haveBaseline = haveBaseline || f == baselineMhz;
        out.push_back(&run);
    }
    if (!haveBaseline) { throw Error("missing baseline run at " + fixed(baselineMhz) + " MHz"); }
    std::sort(out.begin(), out.end(),
              [](const RunFile* a, const RunFile* b) { return *a->header.frequencyMhz > *b->header.frequencyMhz; });
    return out;
}

inline void normalize(std::vector<EdpPoint>& points, double baselineMhz)
{
    auto base = std::find_if(points.begin(), points.end(), [&](const EdpPoint& p) { return p.freqMhz == baselineMhz; });
    if (base == points.end()) { throw Error("missing baseline point"); }
    if (!(base->edp > 0)) { throw Error("baseline EDP is zero"); }
    double ref = base->edp;
    for (auto& p : points)
    {
        p.normalizedEdp = p.freqMhz == baselineMhz ? 1.0 : p.edp / ref;
    }
}

} // namespace detail

/*! @brief Run-level energy-delay product per frequency
 *
 * Energy is the deduplicated node-level total, time the span from the earliest region start
 * to the latest region end over all ranks.
 */
inline std::vector<EdpPoint> edpTable(const std::vector<RunFile>& runs, double baselineMhz)
{
    std::vector<EdpPoint> out;
    for (const auto* run : detail::sortedByFrequency(runs, baselineMhz))
    {
        detail::requireNonEmpty(*run);
        Micros first = std::numeric_limits<Micros>::max();
        Micros last  = std::numeric_limits<Micros>::min();
        for (const auto& r : run->records)
        {
            first = std::min(first, r.startUs);
            last  = std::max(last, r.endUs);
        }
        EdpPoint p;
        p.freqMhz = *run->header.frequencyMhz;
        p.energyJ = detail::nodeEnergy(topLevel(run->records));
        p.timeS   = double(last - first) * 1e-6;
        p.edp     = p.energyJ * p.timeS;
        out.push_back(p);
    }
    detail::normalize(out, baselineMhz);
    return out;
}

struct FunctionEdp
{
    //! region -> points sorted by descending frequency
    std::map<std::string, std::vector<EdpPoint>> regions;
    std::vector<std::string>                     warnings;
};

//! @brief per-region EDP: region node energy times region time, normalized per region at the baseline
inline FunctionEdp edpPerFunction(const std::vector<RunFile>& runs, double baselineMhz)
{
    auto sorted = detail::sortedByFrequency(runs, baselineMhz);

    std::set<std::string> names;
    for (const auto* run : sorted)
    {
        for (const auto& r : run->records)
        {
            names.insert(r.region);
        }
    }

    FunctionEdp out;
    for (const auto& name : names)
    {
        std::vector<EdpPoint> points;
        for (const auto* run : sorted)
        {
            auto recs = detail::recordsOf(run->records, name);
            if (recs.empty())
            {
                out.warnings.push_back("region " + name + " absent at " + detail::fixed(*run->header.frequencyMhz) +
                                       " MHz, omitted there");
                continue;
            }
            EdpPoint p;
            p.freqMhz = *run->header.frequencyMhz;
            p.energyJ = detail::nodeEnergy(recs);
            p.timeS   = detail::regionTime(recs);
            p.edp     = p.energyJ * p.timeS;
            points.push_back(p);
        }
        bool hasBase = std::any_of(points.begin(), points.end(), [&](const EdpPoint& p) { return p.freqMhz == baselineMhz; });
        if (!hasBase)
        {
            out.warnings.push_back("region " + name + " absent at the baseline frequency, omitted");
            continue;
        }
        try
        {
            detail::normalize(points, baselineMhz);
        }
        catch (const Error& e)
        {
            out.warnings.push_back("region " + name + ": " + e.what() + ", omitted");
            continue;
        }
        out.regions[name] = std::move(points);
    }
    return out;
}

//! @brief TOTAL rows first, then one block per region when a per-function table is given
inline std::string renderEdpReport(const std::vector<EdpPoint>& total, const FunctionEdp* perFunction = nullptr)
{
    std::ostringstream table;
    std::ostringstream lines;
    table << detail::pad("region", 28) << detail::pad("freq_mhz", 14, false) << detail::pad("energy_j", 18, false)
          << detail::pad("time_s", 14, false) << detail::pad("edp_js", 22, false)
          << detail::pad("normalized", 12, false) << "\n";
    auto emit = [&](const std::string& label, const std::vector<EdpPoint>& points)
    {
        for (const auto& p : points)
        {
            table << detail::pad(label, 28) << detail::pad(detail::fixed(p.freqMhz), 14, false)
                  << detail::pad(detail::fixed(p.energyJ), 18, false) << detail::pad(detail::fixed(p.timeS), 14, false)
                  << detail::pad(detail::fixed(p.edp), 22, false)
                  << detail::pad(detail::fixed(p.normalizedEdp), 12, false) << "\n";
            lines << "EDP|" << label << "|" << detail::fixed(p.freqMhz) << "|" << detail::fixed(p.energyJ) << "|"
                  << detail::fixed(p.timeS) << "|" << detail::fixed(p.edp) << "|" << detail::fixed(p.normalizedEdp)
                  << "\n";
        }
    };
    emit("TOTAL", total);
    if (perFunction)
    {
        for (const auto& [region, points] : perFunction->regions)
        {
            emit(region, points);
        }
    }
    return table.str() + lines.str();
}

} // namespace emeter
