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
 * @brief Synthetic time-stepping workload on a simulated clock
 *
 * Every rank runs steps x the configured region sequence back to back, starting at t = 0.
 * Region times come from syntheticDuration, powers from the synthetic backend, and the sampler
 * is stepped on its period grid, so a run takes milliseconds and is bit-reproducible.
 */

#pragma once

#include <deque>

#include "tracefmt.hpp"

namespace emeter
{

struct WorkloadConfig
{
    unsigned                                    steps{100};
    unsigned                                    ranks{1};
    std::vector<std::pair<std::string, double>> sequence;
    std::string                                 label;
    std::vector<double>                         freqsMhz;

    void validate() const
    {
        if (steps < 1) { throw Error("workload: steps must be >= 1"); }
        if (ranks < 1) { throw Error("workload: ranks must be >= 1"); }
        if (sequence.empty()) { throw Error("workload: no regions"); }
        for (const auto& [name, base] : sequence)
        {
            if (!(base > 0)) { throw Error("workload: duration of " + name + " must be > 0"); }
        }
        std::set<double> seen;
        for (double f : freqsMhz)
        {
            if (!(f > 0)) { throw Error("workload: frequencies must be > 0"); }
            if (!seen.insert(f).second) { throw Error("workload: duplicate frequency " + detail::fixed(f)); }
        }
    }

    /*! @brief Parse the workload format
     *
     *   steps <n>
     *   ranks <n>
     *   region <name> <base_duration_s>     (repeatable, in execution order)
     *   freqs <mhz>...
     *   label <text>
     */
    static WorkloadConfig parse(std::string_view text, const std::string& source = "<workload>")
    {
        WorkloadConfig cfg;
        std::size_t    lineNo = 0;
        for (auto raw : detail::split(text, '\n'))
        {
            ++lineNo;
            auto tok = detail::tokenize(detail::stripComment(raw));
            if (tok.empty()) { continue; }
            auto fail = [&](const std::string& what) { throw SyntaxError(source, lineNo, what); };
            if (tok[0] == "steps" || tok[0] == "ranks")
            {
                unsigned n = 0;
                if (tok.size() != 2 || !detail::parseNumber(tok[1], n)) { fail("'" + std::string(tok[0]) + "' takes one integer"); }
                (tok[0] == "steps" ? cfg.steps : cfg.ranks) = n;
            }
            else if (tok[0] == "region")
            {
                double base = 0;
                if (tok.size() != 3 || !detail::parseNumber(tok[2], base)) { fail("'region' takes a name and a duration"); }
                if (!detail::isValidName(tok[1])) { fail("invalid region name '" + std::string(tok[1]) + "'"); }
                cfg.sequence.emplace_back(std::string(tok[1]), base);
            }
            else if (tok[0] == "freqs")
            {
                if (tok.size() < 2) { fail("'freqs' needs at least one frequency"); }
                for (std::size_t i = 1; i < tok.size(); ++i)
                {
                    double f = 0;
                    if (!detail::parseNumber(tok[i], f)) { fail("bad frequency '" + std::string(tok[i]) + "'"); }
                    cfg.freqsMhz.push_back(f);
                }
            }
            else if (tok[0] == "label")
            {
                auto rest = detail::trim(detail::stripComment(raw));
                cfg.label = std::string(detail::trim(rest.substr(5)));
            }
            else { fail("unknown directive '" + std::string(tok[0]) + "'"); }
        }
        try
        {
            cfg.validate();
        }
        catch (const Error& e)
        {
            throw Error(source + ": " + e.what());
        }
        return cfg;
    }

    static WorkloadConfig load(const std::string& path) { return parse(detail::readFile(path), path); }
};

namespace detail
{

inline void checkWorkload(const WorkloadConfig& cfg, const Topology& topo)
{
    cfg.validate();
    if (cfg.ranks != topo.ranks().size())
    {
        throw Error("workload has " + std::to_string(cfg.ranks) + " ranks but the topology maps " +
                    std::to_string(topo.ranks().size()));
    }
}

inline SyntheticModel atFrequency(SyntheticModel model, std::optional<double> freqMhz)
{
    if (freqMhz) { model.currentMhz = *freqMhz; }
    model.validate();
    return model;
}

} // namespace detail

/*! @brief Execute the workload on every rank and return each rank's records
 *
 * freqMhz overrides the model's current frequency. At a region boundary that coincides with a
 * sampling tick, the tick reads the power of the region that is ending.
 */
inline std::map<int, std::vector<RegionRecord>> runWorkload(const WorkloadConfig& cfg, const SyntheticModel& baseModel,
                                                            const Topology& topo, SamplerConfig samplerConfig,
                                                            const std::string& runId,
                                                            std::optional<double> freqMhz = std::nullopt,
                                                            std::vector<std::string>* warnings = nullptr)
{
    detail::checkWorkload(cfg, topo);
    auto model = detail::atFrequency(baseModel, freqMhz);

    SyntheticBackend backend(model, topo);
    Sampler          sampler(backend, topo, samplerConfig);

    std::vector<RankContext> contexts;
    for (const auto& [rank, place] : topo.ranks())
    {
        contexts.emplace_back(sampler, rank, runId);
    }

    // one schedule shared by all ranks: (start, end) per region invocation
    struct Slot
    {
        std::string region;
        Micros      start;
        Micros      end;
    };
    std::vector<Slot> schedule;
    Micros            t = 0;
    for (unsigned step = 0; step < cfg.steps; ++step)
    {
        for (const auto& [name, base] : cfg.sequence)
        {
            auto dur = Micros(std::llround(syntheticDuration(model, name, base, model.currentMhz) * 1e6));
            if (dur < 1) { throw Error("region " + name + " shorter than 1 us"); }
            schedule.push_back({name, t, t + dur});
            t += dur;
        }
    }

    struct PendingOp
    {
        int         rank;
        bool        begin;
        std::string region;
        Micros      t;
    };
    std::deque<PendingOp> pending;
    const Micros          period   = samplerConfig.periodUs();
    Micros                nextTick = 0;
    Micros                sampled  = std::numeric_limits<Micros>::min();

    auto sampleThrough = [&](Micros until)
    {
        while (nextTick <= until)
        {
            sampler.sampleAt(nextTick);
            sampled = nextTick;
            nextTick += period;
        }
    };
    auto drain = [&]()
    {
        while (!pending.empty() && pending.front().t <= sampled)
        {
            const auto& op = pending.front();
            if (op.begin) { contexts[op.rank].regionBegin(op.region, op.t); }
            else { contexts[op.rank].regionEnd(op.region, op.t); }
            pending.pop_front();
        }
    };

    for (std::size_t i = 0; i < schedule.size(); ++i)
    {
        const auto& slot = schedule[i];
        sampleThrough(slot.start);
        drain();
        for (auto& ctx : contexts)
        {
            if (i > 0) { pending.push_back({ctx.rank(), false, schedule[i - 1].region, slot.start}); }
            backend.setActiveRegion(ctx.rank(), slot.region, slot.start);
            pending.push_back({ctx.rank(), true, slot.region, slot.start});
        }
    }
    const Micros finish = schedule.back().end;
    sampleThrough(finish);
    drain();
    for (auto& ctx : contexts)
    {
        pending.push_back({ctx.rank(), false, schedule.back().region, finish});
        backend.setActiveRegion(ctx.rank(), std::nullopt, finish);
    }
    // the final end needs a sample at or after it
    sampleThrough(finish + period - 1);
    drain();
    if (!pending.empty() || sampler.failed())
    {
        throw Error("workload run incomplete: " + (sampler.failed() ? sampler.errorMessage() : "unsampled regions"));
    }

    if (warnings)
    {
        for (auto& w : sampler.takeWarnings())
        {
            warnings->push_back(std::move(w));
        }
    }
    std::map<int, std::vector<RegionRecord>> out;
    for (auto& ctx : contexts)
    {
        out[ctx.rank()] = ctx.flush();
    }
    return out;
}

//! @brief write rank<r>.rec for every rank into dir, returning the paths
inline std::vector<std::filesystem::path> writeRankFiles(const std::map<int, std::vector<RegionRecord>>& perRank,
                                                         const RunHeader& header, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> paths;
    for (const auto& [rank, records] : perRank)
    {
        auto path = dir / ("rank" + std::to_string(rank) + ".rec");
        writeRankFile(records, header, path);
        paths.push_back(path);
    }
    return paths;
}

struct RegionTruth
{
    //! summed over all steps, per rank (ranks run concurrently)
    double durationS{0};
    //! per physical sensor, each counted once
    std::map<SensorId, double> sensorJ;
    double                     nodeJ{0};
    double                     gpuJ{0};
    double                     cpuJ{0};
    double                     memoryJ{0};
};

struct GroundTruth
{
    std::map<std::string, RegionTruth> regions;
    std::map<SensorId, double>         sensorJ;
    double                             nodeJ{0};
    double                             wallTimeS{0};
};

/*! @brief Closed-form energies of a workload, without any sampling
 *
 * All ranks sit in the same region at the same time, so every sensor driven by a rank draws
 * the region's model power for the whole region duration.
 */
inline GroundTruth groundTruth(const WorkloadConfig& cfg, const SyntheticModel& baseModel, const Topology& topo,
                               std::optional<double> freqMhz = std::nullopt)
{
    detail::checkWorkload(cfg, topo);
    auto model = detail::atFrequency(baseModel, freqMhz);

    GroundTruth out;
    for (const auto& [name, base] : cfg.sequence)
    {
        const double f        = model.currentMhz;
        const double stepTime = base * (model.alphaFor(name) * model.referenceMhz / f + 1.0 - model.alphaFor(name));
        auto&        truth    = out.regions[name];
        truth.durationS += stepTime * cfg.steps;
        out.wallTimeS += stepTime * cfg.steps;

        for (const auto& s : topo.sensors())
        {
            if (s.sharedByRanks.empty()) { continue; }
            const auto* p = model.lookup(name, s.id.kind);
            double power  = p ? p->staticW + p->dynamicW * std::pow(f / model.referenceMhz, model.powerExponent)
                              : model.idle(s.id.kind);
            double joules = power * stepTime * cfg.steps;
            truth.sensorJ[s.id] += joules;
            out.sensorJ[s.id] += joules;
            switch (s.id.kind)
            {
                case DeviceKind::Node: truth.nodeJ += joules; out.nodeJ += joules; break;
                case DeviceKind::Cpu: truth.cpuJ += joules; break;
                case DeviceKind::Memory: truth.memoryJ += joules; break;
                case DeviceKind::GpuCard: truth.gpuJ += joules; break;
            }
        }
    }
    return out;
}

} // namespace emeter
