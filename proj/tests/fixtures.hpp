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
 * @brief Shared test fixtures: hardware shapes, trace builders, virtual-time region drivers
 */

#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "emeter/emeter.hpp"

namespace emeter::test
{

//! one node, 1 CPU, memory, 4 MI250X-style cards with 2 GCDs each, 8 ranks
inline const char* lumiTopologyText = R"(# LUMI-G-like node
gcds_per_card 2
node lumi0
sensor lumi0 node 0 power 0
sensor lumi0 cpu 0 power 0
sensor lumi0 memory 0 power 0
sensor lumi0 gpu 0 power 0
sensor lumi0 gpu 1 power 0
sensor lumi0 gpu 2 power 0
sensor lumi0 gpu 3 power 0
rank 0 lumi0 0 0
rank 1 lumi0 0 1
rank 2 lumi0 1 0
rank 3 lumi0 1 1
rank 4 lumi0 2 0
rank 5 lumi0 2 1
rank 6 lumi0 3 0
rank 7 lumi0 3 1
)";

//! the same sensors with one rank per card (A100-style, no memory sensor in the CSCS variant)
inline const char* cscsTwinTopologyText = R"(gcds_per_card 1
node lumi0
sensor lumi0 node 0 power 0
sensor lumi0 cpu 0 power 0
sensor lumi0 memory 0 power 0
sensor lumi0 gpu 0 power 0
sensor lumi0 gpu 1 power 0
sensor lumi0 gpu 2 power 0
sensor lumi0 gpu 3 power 0
rank 0 lumi0 0 0
rank 1 lumi0 1 0
rank 2 lumi0 2 0
rank 3 lumi0 3 0
)";

//! CSCS-A100-like node: 1 CPU, 4 cards, no memory sensor
inline const char* cscsTopologyText = R"(gcds_per_card 1
node cscs0
sensor cscs0 node 0 power 0
sensor cscs0 cpu 0 power 0
sensor cscs0 gpu 0 power 0
sensor cscs0 gpu 1 power 0
sensor cscs0 gpu 2 power 0
sensor cscs0 gpu 3 power 0
rank 0 cscs0 0 0
rank 1 cscs0 1 0
rank 2 cscs0 2 0
rank 3 cscs0 3 0
)";

//! a single rank with only node, cpu and one gpu sensor
inline const char* singleGpuTopologyText = R"(gcds_per_card 1
node n0
sensor n0 node 0 power 0
sensor n0 cpu 0 power 0
sensor n0 gpu 0 power 0
rank 0 n0 0 0
)";

inline Topology lumiTopology() { return parseTopology(lumiTopologyText); }
inline Topology cscsTopology() { return parseTopology(cscsTopologyText); }
inline Topology cscsTwinTopology() { return parseTopology(cscsTwinTopologyText); }
inline Topology singleGpuTopology() { return parseTopology(singleGpuTopologyText); }

//! builds replay trace text
class TraceBuilder
{
public:
    TraceBuilder& point(const SensorId& s, Micros t, double value, const char* unit = "W")
    {
        lines_.push_back(std::to_string(t) + "," + s.node + "," + std::string(kindToken(s.kind)) + "," +
                         std::to_string(s.index) + "," + detail::shortestDouble(value) + "," + unit);
        return *this;
    }

    //! constant power from t0 to t1 inclusive, one point per step
    TraceBuilder& constant(const SensorId& s, Micros t0, Micros t1, double watts, Micros step)
    {
        for (Micros t = t0; t <= t1; t += step)
        {
            point(s, t, watts);
        }
        return *this;
    }

    //! every sensor of the topology held at the given per-kind power over [t0, t1]
    TraceBuilder& allSensors(const Topology& topo, Micros t0, Micros t1, Micros step,
                             const std::function<double(const SensorId&, Micros)>& power)
    {
        for (const auto& s : topo.sensors())
        {
            for (Micros t = t0; t <= t1; t += step)
            {
                point(s.id, t, power(s.id, t));
            }
        }
        return *this;
    }

    std::string text() const
    {
        std::string out = "timestamp_us,sensor_node,sensor_kind,sensor_index,value,unit\n";
        for (const auto& l : lines_)
        {
            out += l + "\n";
        }
        return out;
    }

    ReplayTrace trace() const { return ReplayTrace::parse(text()); }

private:
    std::vector<std::string> lines_;
};

struct RankEvent
{
    int         rank;
    bool        begin;
    std::string region;
    Micros      tUs;
};

/*! @brief Drive region events of several ranks against one sampler on a virtual clock
 *
 * Ticks are placed every period starting at the first event; each event runs once a tick at
 * or after its time was sampled.
 */
inline std::map<int, std::vector<RegionRecord>> driveVirtual(PowerBackend& backend, const Topology& topo,
                                                              SamplerConfig cfg, std::vector<RankEvent> events,
                                                              const std::string& runId = "test")
{
    std::stable_sort(events.begin(), events.end(), [](const RankEvent& a, const RankEvent& b) { return a.tUs < b.tUs; });
    Sampler                  sampler(backend, topo, cfg);
    std::vector<RankContext> ctx;
    ctx.reserve(topo.ranks().size());
    for (const auto& [rank, place] : topo.ranks())
    {
        ctx.emplace_back(sampler, rank, runId);
    }
    Micros tick = events.front().tUs;
    sampler.sampleAt(tick);
    for (const auto& ev : events)
    {
        while (tick < ev.tUs)
        {
            tick += cfg.periodUs();
            sampler.sampleAt(tick);
        }
        if (ev.begin) { ctx[ev.rank].regionBegin(ev.region, ev.tUs); }
        else { ctx[ev.rank].regionEnd(ev.region, ev.tUs); }
    }
    std::map<int, std::vector<RegionRecord>> out;
    for (auto& c : ctx)
    {
        out[c.rank()] = c.flush();
    }
    return out;
}

//! the same sequence of back-to-back regions on every rank
inline std::vector<RankEvent> lockstep(const Topology& topo, const std::vector<std::pair<std::string, Micros>>& regions,
                                       Micros start = 0)
{
    std::vector<RankEvent> events;
    for (const auto& [rank, place] : topo.ranks())
    {
        Micros t = start;
        for (const auto& [name, dur] : regions)
        {
            events.push_back({rank, true, name, t});
            events.push_back({rank, false, name, t + dur});
            t += dur;
        }
    }
    return events;
}

inline std::vector<RegionRecord> flatten(const std::map<int, std::vector<RegionRecord>>& perRank)
{
    std::vector<RegionRecord> out;
    for (const auto& [rank, recs] : perRank)
    {
        out.insert(out.end(), recs.begin(), recs.end());
    }
    return out;
}

inline RunFile toRun(const std::map<int, std::vector<RegionRecord>>& perRank, const Topology& topo,
                     std::optional<double> freq = std::nullopt, const std::string& runId = "test")
{
    RunFile run;
    run.header = {runId, topologyDigest(topo), "replay", 100, freq, "2026-01-01T00:00:00Z"};
    run.records = flatten(perRank);
    return mergeRunFiles({run});
}

//! scratch directory removed at scope exit
class TempDir
{
public:
    TempDir()
    {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("emeter-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path        operator/(const std::string& name) const { return path_ / name; }

    void write(const std::string& name, const std::string& content) const
    {
        std::ofstream(path_ / name, std::ios::binary) << content;
    }

private:
    std::filesystem::path path_;
};

} // namespace emeter::test
