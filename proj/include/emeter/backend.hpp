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
 * @brief Power reading backends: counter files, trace replay and a synthetic power model
 *
 * Every backend answers readAll(t) with exactly one sample per topology sensor, all stamped t.
 * A backend instance belongs to a single sampler thread.
 */

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "model.hpp"

namespace emeter
{

class PowerBackend
{
public:
    virtual ~PowerBackend() = default;

    virtual std::vector<PowerSample> readAll(Micros tUs) = 0;

    //! @brief "counters", "replay" or "synthetic", recorded in run file headers
    virtual std::string kindName() const = 0;

    //! @brief non-fatal conditions since the last call (clamped replay times, model misses)
    std::vector<std::string> takeWarnings() { return std::exchange(warnings_, {}); }

protected:
    void warn(std::string msg) { warnings_.push_back(std::move(msg)); }

private:
    std::vector<std::string> warnings_;
};

/*! @brief Reads pm_counters-style files, one per sensor
 *
 * File names are node_power, cpu<i>_power, memory<i>_power, accel<i>_power (or the _energy
 * variants for cumulative counters). Each holds a single line "<value> <unit> <timestamp_us>".
 * A directory named after the node is used when present, the root directory otherwise.
 */
class CounterFilesBackend : public PowerBackend
{
public:
    CounterFilesBackend(std::filesystem::path dir, const Topology& topo)
        : sensors_(topo.sensors())
    {
        for (const auto& s : sensors_)
        {
            auto base = std::filesystem::is_directory(dir / s.id.node) ? dir / s.id.node : dir;
            auto path = base / fileName(s);
            if (!std::filesystem::exists(path)) { throw Error("missing counter file " + path.string()); }
            paths_.push_back(path);
        }
    }

    static std::string fileName(const SensorMeta& s)
    {
        std::string stem;
        switch (s.id.kind)
        {
            case DeviceKind::Node: stem = "node"; break;
            case DeviceKind::Cpu: stem = "cpu" + std::to_string(s.id.index); break;
            case DeviceKind::Memory: stem = "memory" + std::to_string(s.id.index); break;
            case DeviceKind::GpuCard: stem = "accel" + std::to_string(s.id.index); break;
        }
        return stem + (s.mode == SensorMode::Power ? "_power" : "_energy");
    }

    //! @brief parse "<value> <unit> <timestamp_us>"; nullopt when garbled
    static std::optional<double> parseCounter(std::string_view content, SensorMode mode)
    {
        auto tok = detail::tokenize(detail::trim(content));
        if (tok.size() != 3) { return std::nullopt; }
        double value = 0;
        Micros stamp = 0;
        if (!detail::parseNumber(tok[0], value) || value < 0) { return std::nullopt; }
        if (tok[1] != (mode == SensorMode::Power ? "W" : "J")) { return std::nullopt; }
        if (!detail::parseNumber(tok[2], stamp)) { return std::nullopt; }
        return value;
    }

    std::vector<PowerSample> readAll(Micros tUs) override
    {
        std::vector<PowerSample> out;
        out.reserve(sensors_.size());
        for (std::size_t i = 0; i < sensors_.size(); ++i)
        {
            std::optional<double> value;
            for (int attempt = 0; attempt < 2 && !value; ++attempt)
            {
                std::string content;
                try
                {
                    content = detail::readFile(paths_[i].string());
                }
                catch (const Error&)
                {
                    continue;
                }
                value = parseCounter(content, sensors_[i].mode);
            }
            if (!value) { throw Error("garbled or unreadable counter file " + paths_[i].string()); }
            out.push_back({sensors_[i].id, tUs, *value, sensors_[i].mode});
        }
        return out;
    }

    std::string kindName() const override { return "counters"; }

    const std::vector<std::filesystem::path>& paths() const { return paths_; }

private:
    std::vector<SensorMeta>            sensors_;
    std::vector<std::filesystem::path> paths_;
};

/*! @brief A recorded power/energy trace
 *
 * Text format, one header line then `timestamp_us,sensor_node,sensor_kind,sensor_index,value,unit`
 * with unit W or J and timestamps strictly increasing per sensor.
 */
class ReplayTrace
{
public:
    struct Series
    {
        SensorMode                          mode{SensorMode::Power};
        std::vector<std::pair<Micros, double>> points;
    };

    static ReplayTrace parse(std::string_view text, const std::string& source = "<trace>")
    {
        ReplayTrace trace;
        std::size_t lineNo = 0;
        bool        header = true;
        for (auto raw : detail::split(text, '\n'))
        {
            ++lineNo;
            auto line = detail::trim(raw);
            if (line.empty()) { continue; }
            if (header)
            {
                header = false;
                continue;
            }
            auto fail   = [&](const std::string& what) { throw SyntaxError(source, lineNo, what); };
            auto fields = detail::split(line, ',');
            if (fields.size() != 6) { fail("expected 6 comma-separated fields"); }
            Micros   t = 0;
            unsigned index = 0;
            double   value = 0;
            if (!detail::parseNumber(detail::trim(fields[0]), t)) { fail("bad timestamp"); }
            auto kind = parseKind(detail::trim(fields[2]));
            if (!kind) { fail("unknown sensor kind '" + std::string(fields[2]) + "'"); }
            if (!detail::parseNumber(detail::trim(fields[3]), index)) { fail("bad sensor index"); }
            if (!detail::parseNumber(detail::trim(fields[4]), value) || value < 0) { fail("bad value"); }
            auto       unit = detail::trim(fields[5]);
            SensorMode mode;
            if (unit == "W") { mode = SensorMode::Power; }
            else if (unit == "J") { mode = SensorMode::CumulativeEnergy; }
            else { fail("unit must be W or J"); }

            SensorId id{std::string(detail::trim(fields[1])), *kind, index};
            auto [it, fresh] = trace.series_.try_emplace(id);
            auto& series     = it->second;
            if (fresh) { series.mode = mode; }
            else if (series.mode != mode) { fail("unit changes within sensor " + id.key()); }
            if (!series.points.empty() && series.points.back().first >= t)
            {
                fail("timestamps not strictly increasing for " + id.key());
            }
            series.points.emplace_back(t, value);
        }
        return trace;
    }

    static ReplayTrace load(const std::string& path) { return parse(detail::readFile(path), path); }

    const Series* find(const SensorId& id) const
    {
        auto it = series_.find(id);
        return it == series_.end() ? nullptr : &it->second;
    }

    const std::map<SensorId, Series>& series() const { return series_; }

    //! @brief sample-and-hold value at t; clamped is set when t lies outside the sensor's range
    static double valueAt(const Series& s, Micros t, bool& clamped)
    {
        const auto& pts = s.points;
        clamped         = t < pts.front().first || t > pts.back().first;
        if (t <= pts.front().first) { return pts.front().second; }
        auto it = std::upper_bound(pts.begin(), pts.end(), t,
                                   [](Micros v, const std::pair<Micros, double>& p) { return v < p.first; });
        return std::prev(it)->second;
    }

    /*! @brief Exact energy over [t0, t1]
     *
     * Power series integrate as a step function (each point holds until the next, the first
     * point extends backwards and the last forwards). Energy series return the difference.
     */
    static double energyBetween(const Series& s, Micros t0, Micros t1)
    {
        bool clamped = false;
        if (s.mode == SensorMode::CumulativeEnergy) { return valueAt(s, t1, clamped) - valueAt(s, t0, clamped); }
        if (t1 <= t0) { return 0.0; }
        double      joules = 0;
        const auto& pts    = s.points;
        for (std::size_t i = 0; i < pts.size(); ++i)
        {
            Micros segStart = i == 0 ? std::min(t0, pts[0].first) : pts[i].first;
            Micros segEnd   = i + 1 < pts.size() ? pts[i + 1].first : std::max(t1, pts.back().first);
            Micros a        = std::max(segStart, t0);
            Micros b        = std::min(segEnd, t1);
            if (b > a) { joules += pts[i].second * double(b - a) * 1e-6; }
        }
        return joules;
    }

    Micros startUs() const
    {
        Micros t = std::numeric_limits<Micros>::max();
        for (const auto& [id, s] : series_)
        {
            t = std::min(t, s.points.front().first);
        }
        return t;
    }

    Micros endUs() const
    {
        Micros t = std::numeric_limits<Micros>::min();
        for (const auto& [id, s] : series_)
        {
            t = std::max(t, s.points.back().first);
        }
        return t;
    }

private:
    std::map<SensorId, Series> series_;
};

class ReplayBackend : public PowerBackend
{
public:
    ReplayBackend(ReplayTrace trace, const Topology& topo, double speedFactor = 1.0)
        : trace_(std::move(trace))
        , speedFactor_(speedFactor)
    {
        if (!(speedFactor_ > 0)) { throw Error("replay speed factor must be > 0"); }
        for (const auto& s : topo.sensors())
        {
            const auto* series = trace_.find(s.id);
            if (!series) { throw Error("replay trace has no data for sensor " + s.id.key()); }
            if (series->mode != s.mode)
            {
                throw Error("replay trace unit for " + s.id.key() + " does not match the topology mode");
            }
            bound_.push_back({s.id, series});
        }
    }

    std::vector<PowerSample> readAll(Micros tUs) override
    {
        std::vector<PowerSample> out;
        out.reserve(bound_.size());
        bool anyClamped = false;
        for (const auto& [id, series] : bound_)
        {
            bool clamped = false;
            out.push_back({id, tUs, ReplayTrace::valueAt(*series, tUs, clamped), series->mode});
            anyClamped |= clamped;
        }
        if (anyClamped) { warn("replay time " + std::to_string(tUs) + " us outside trace range, clamped"); }
        return out;
    }

    std::string kindName() const override { return "replay"; }

    //! @brief trace microseconds per wall-clock microsecond when paced in real time
    double speedFactor() const { return speedFactor_; }

    const ReplayTrace& trace() const { return trace_; }

private:
    ReplayTrace                                         trace_;
    double                                              speedFactor_;
    std::vector<std::pair<SensorId, const ReplayTrace::Series*>> bound_;
};

struct RegionPower
{
    double staticW{0};
    double dynamicW{0};
    //! compute intensity: share of the region's time that scales with 1/f
    double alpha{0};
};

/*! @brief Desk-scale power and time model of an instrumented code
 *
 * Region power is static + dynamic * (f / f_ref)^exponent, region time is
 * base * (alpha * f_ref / f + 1 - alpha).
 */
struct SyntheticModel
{
    std::map<std::pair<std::string, DeviceKind>, RegionPower> regions;
    std::map<DeviceKind, double>                              idleW;
    double                                                    referenceMhz{1410};
    double                                                    currentMhz{1410};
    double                                                    powerExponent{3};

    const RegionPower* lookup(const std::string& region, DeviceKind kind) const
    {
        auto it = regions.find({region, kind});
        return it == regions.end() ? nullptr : &it->second;
    }

    double idle(DeviceKind kind) const
    {
        auto it = idleW.find(kind);
        return it == idleW.end() ? 0.0 : it->second;
    }

    //! @brief alpha of the GPU entry, else of the first entry found for the region, else 0
    double alphaFor(const std::string& region) const
    {
        if (auto* gpu = lookup(region, DeviceKind::GpuCard)) { return gpu->alpha; }
        for (auto kind : allDeviceKinds)
        {
            if (auto* p = lookup(region, kind)) { return p->alpha; }
        }
        return 0.0;
    }

    bool hasRegion(const std::string& region) const
    {
        return std::any_of(allDeviceKinds, std::end(allDeviceKinds),
                           [&](DeviceKind k) { return lookup(region, k) != nullptr; });
    }

    void validate() const
    {
        for (const auto& [key, p] : regions)
        {
            const auto where = key.first + "/" + std::string(kindToken(key.second));
            if (!(p.alpha >= 0 && p.alpha <= 1)) { throw Error("model " + where + ": alpha must lie in [0,1]"); }
            if (!(p.staticW >= 0 && p.dynamicW >= 0)) { throw Error("model " + where + ": powers must be >= 0"); }
        }
        for (const auto& [kind, w] : idleW)
        {
            if (!(w >= 0)) { throw Error("model idle power must be >= 0"); }
        }
        if (!(referenceMhz > 0 && currentMhz > 0)) { throw Error("model frequencies must be > 0"); }
        if (!(powerExponent >= 0)) { throw Error("model power exponent must be >= 0"); }
    }

    /*! @brief Parse the model-config format
     *
     *   region <name> <kind> <static_w> <dynamic_w> <alpha>
     *   idle <kind> <watts>
     *   freq <reference_mhz> <current_mhz>
     *   exponents <power_exp> affine
     */
    static SyntheticModel parse(std::string_view text, const std::string& source = "<model>")
    {
        SyntheticModel model;
        std::size_t    lineNo = 0;
        for (auto raw : detail::split(text, '\n'))
        {
            ++lineNo;
            auto tok = detail::tokenize(detail::stripComment(raw));
            if (tok.empty()) { continue; }
            auto fail = [&](const std::string& what) { throw SyntaxError(source, lineNo, what); };
            auto num  = [&](std::string_view s)
            {
                double v = 0;
                if (!detail::parseNumber(s, v)) { fail("bad number '" + std::string(s) + "'"); }
                return v;
            };
            auto kindOf = [&](std::string_view s)
            {
                auto k = parseKind(s);
                if (!k) { fail("unknown device kind '" + std::string(s) + "'"); }
                return *k;
            };

            if (tok[0] == "region")
            {
                if (tok.size() != 6) { fail("'region' takes 5 arguments"); }
                if (!detail::isValidName(tok[1])) { fail("invalid region name '" + std::string(tok[1]) + "'"); }
                RegionPower p{num(tok[3]), num(tok[4]), num(tok[5])};
                model.regions[{std::string(tok[1]), kindOf(tok[2])}] = p;
            }
            else if (tok[0] == "idle")
            {
                if (tok.size() != 3) { fail("'idle' takes 2 arguments"); }
                model.idleW[kindOf(tok[1])] = num(tok[2]);
            }
            else if (tok[0] == "freq")
            {
                if (tok.size() != 3) { fail("'freq' takes 2 arguments"); }
                model.referenceMhz = num(tok[1]);
                model.currentMhz   = num(tok[2]);
            }
            else if (tok[0] == "exponents")
            {
                if (tok.size() != 3) { fail("'exponents' takes 2 arguments"); }
                model.powerExponent = num(tok[1]);
                if (tok[2] != "affine") { fail("only the 'affine' time model is supported"); }
            }
            else { fail("unknown directive '" + std::string(tok[0]) + "'"); }
        }
        try
        {
            model.validate();
        }
        catch (const Error& e)
        {
            throw Error(source + ": " + e.what());
        }
        return model;
    }

    static SyntheticModel load(const std::string& path) { return parse(detail::readFile(path), path); }
};

//! @brief region power at frequency fMhz, idle power of the kind when the model has no entry
inline double syntheticPower(const SyntheticModel& model, const std::string& region, DeviceKind kind, double fMhz)
{
    const auto* p = model.lookup(region, kind);
    if (!p) { return model.idle(kind); }
    return p->staticW + p->dynamicW * std::pow(fMhz / model.referenceMhz, model.powerExponent);
}

inline double syntheticDuration(const SyntheticModel& model, const std::string& region, double baseDurationS,
                                double fMhz)
{
    if (!(baseDurationS > 0)) { throw Error("base duration of " + region + " must be > 0"); }
    double alpha = model.alphaFor(region);
    return baseDurationS * (alpha * model.referenceMhz / fMhz + (1.0 - alpha));
}

/*! @brief Evaluates the synthetic model for the region each rank is currently in
 *
 * A sensor shared by several ranks reports the mean of the per-rank powers, so ranks running
 * in lockstep see the region's power unchanged. Energy-mode sensors integrate that power
 * exactly between region switches and wrap at their counter width.
 */
class SyntheticBackend : public PowerBackend
{
public:
    SyntheticBackend(SyntheticModel model, const Topology& topo)
        : model_(std::move(model))
        , sensors_(topo.sensors())
        , active_(topo.ranks().size())
        , energy_(sensors_.size(), 0.0)
    {
        model_.validate();
    }

    const SyntheticModel& model() const { return model_; }

    //! @brief switch the rank's region at tUs; nullopt means between regions (idle)
    void setActiveRegion(int rank, std::optional<std::string> region, Micros tUs)
    {
        if (rank < 0 || std::size_t(rank) >= active_.size()) { throw Error("unknown rank " + std::to_string(rank)); }
        advance(tUs);
        active_[rank] = std::move(region);
    }

    std::vector<PowerSample> readAll(Micros tUs) override
    {
        advance(tUs);
        std::vector<PowerSample> out;
        out.reserve(sensors_.size());
        for (std::size_t i = 0; i < sensors_.size(); ++i)
        {
            const auto& s = sensors_[i];
            if (s.mode == SensorMode::Power) { out.push_back({s.id, tUs, sensorPower(s, true), s.mode}); }
            else
            {
                double v = energy_[i];
                if (s.counterWidthBits > 0) { v = std::fmod(v, std::ldexp(1.0, s.counterWidthBits)); }
                out.push_back({s.id, tUs, v, s.mode});
            }
        }
        return out;
    }

    std::string kindName() const override { return "synthetic"; }

private:
    double rankPower(int rank, DeviceKind kind, bool reportMiss)
    {
        const auto& region = active_[rank];
        if (!region) { return model_.idle(kind); }
        if (reportMiss && !model_.lookup(*region, kind))
        {
            warn("no model entry for region " + *region + " on " + std::string(kindToken(kind)) + ", using idle power");
        }
        return syntheticPower(model_, *region, kind, model_.currentMhz);
    }

    double sensorPower(const SensorMeta& s, bool reportMiss)
    {
        if (s.sharedByRanks.empty()) { return model_.idle(s.id.kind); }
        double sum = 0;
        for (int r : s.sharedByRanks)
        {
            sum += rankPower(r, s.id.kind, reportMiss);
        }
        return sum / double(s.sharedByRanks.size());
    }

    void advance(Micros tUs)
    {
        if (!lastUs_) { lastUs_ = tUs; }
        if (tUs <= *lastUs_) { return; }
        double dt = double(tUs - *lastUs_) * 1e-6;
        for (std::size_t i = 0; i < sensors_.size(); ++i)
        {
            if (sensors_[i].mode == SensorMode::CumulativeEnergy) { energy_[i] += sensorPower(sensors_[i], false) * dt; }
        }
        lastUs_ = tUs;
    }

    SyntheticModel                          model_;
    std::vector<SensorMeta>                 sensors_;
    std::vector<std::optional<std::string>> active_;
    std::vector<double>                     energy_;
    std::optional<Micros>                   lastUs_;
};

} // namespace emeter
