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
 * @brief Energy sampler and the per-rank region instrumentation API
 *
 * The sampler turns backend readings into one monotone cumulative-energy accumulator per sensor.
 * It is driven either by a background thread against a clock, or stepped explicitly by a
 * simulated clock. A RankContext brackets named regions and differences the accumulators,
 * interpolated to the exact region boundaries.
 */

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>

#include "backend.hpp"

namespace emeter
{

struct SamplerConfig
{
    unsigned periodMs{100};

    Micros periodUs() const { return Micros(periodMs) * 1000; }

    void validate() const
    {
        if (periodMs < 1) { throw Error("sampler period must be >= 1 ms"); }
    }

    //! @brief EMETER_PERIOD_MS overrides the period when set
    static SamplerConfig fromEnv() { return fromEnv(100); }

    static SamplerConfig fromEnv(unsigned defaultPeriodMs)
    {
        SamplerConfig base;
        base.periodMs = defaultPeriodMs;
        if (const char* env = std::getenv("EMETER_PERIOD_MS"))
        {
            unsigned ms = 0;
            if (!detail::parseNumber(std::string_view(env), ms) || ms < 1)
            {
                throw Error(std::string("EMETER_PERIOD_MS must be a positive integer, got '") + env + "'");
            }
            base.periodMs = ms;
        }
        return base;
    }
};

//! @brief clock reading microseconds since construction, scaled by speed, offset by origin
inline std::function<Micros()> scaledSteadyClock(Micros origin = 0, double speed = 1.0)
{
    auto start = std::chrono::steady_clock::now();
    return [start, origin, speed]()
    {
        auto elapsed = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
        return origin + Micros(elapsed * speed);
    };
}

class Sampler
{
public:
    Sampler(PowerBackend& backend, const Topology& topo, SamplerConfig config = {})
        : backend_(backend)
        , topo_(topo)
        , config_(config)
        , lastRaw_(topo.sensors().size(), 0.0)
        , maxPower_(topo.sensors().size(), 0.0)
    {
        config_.validate();
    }

    Sampler(const Sampler&)            = delete;
    Sampler& operator=(const Sampler&) = delete;

    ~Sampler() { stop(); }

    const Topology&      topology() const { return topo_; }
    const SamplerConfig& config() const { return config_; }
    PowerBackend&        backend() { return backend_; }

    /*! @brief Read the backend at t and extend every accumulator
     *
     * Samples at or before the last sample time are ignored. A backend failure or a counter
     * running backwards puts the sampler in the error state and freezes the accumulators.
     */
    void sampleAt(Micros t)
    {
        if (failed_) { return; }
        {
            std::lock_guard lk(mutex_);
            if (!times_.empty() && t <= times_.back()) { return; }
        }

        std::vector<PowerSample> samples;
        try
        {
            samples = backend_.readAll(t);
            if (samples.size() != topo_.sensors().size()) { throw Error("backend returned wrong sample count"); }
        }
        catch (const std::exception& e)
        {
            fail(e.what());
            return;
        }
        auto backendWarnings = backend_.takeWarnings();

        std::lock_guard lk(mutex_);
        for (auto& w : backendWarnings)
        {
            warnings_.push_back(std::move(w));
        }

        std::vector<double> row(samples.size(), 0.0);
        if (!times_.empty())
        {
            const auto& prev = acc_.back();
            double      dt   = double(t - times_.back()) * 1e-6;
            for (std::size_t i = 0; i < samples.size(); ++i)
            {
                const auto& meta  = topo_.sensors()[i];
                double      value = samples[i].value;
                double      delta = 0;
                if (meta.mode == SensorMode::Power) { delta = 0.5 * (lastRaw_[i] + value) * dt; }
                else
                {
                    delta = value - lastRaw_[i];
                    if (delta < 0)
                    {
                        if (meta.counterWidthBits == 0)
                        {
                            failLocked("energy counter of non-wrapping sensor " + meta.id.key() + " decreased");
                            return;
                        }
                        delta += std::ldexp(1.0, meta.counterWidthBits);
                    }
                }
                row[i] = prev[i] + delta;
                if (meta.mode == SensorMode::CumulativeEnergy && dt > 0)
                {
                    maxPower_[i] = std::max(maxPower_[i], delta / dt);
                }
            }
        }
        for (std::size_t i = 0; i < samples.size(); ++i)
        {
            lastRaw_[i] = samples[i].value;
            if (topo_.sensors()[i].mode == SensorMode::Power) { maxPower_[i] = std::max(maxPower_[i], samples[i].value); }
        }
        times_.push_back(t);
        acc_.push_back(std::move(row));
        cv_.notify_all();
    }

    //! @brief sample once now, then every period on a background thread until stop()
    void start(std::function<Micros()> clock)
    {
        if (thread_.joinable()) { throw Error("sampler already running"); }
        stopRequested_ = false;
        running_       = true;
        sampleAt(clock());
        thread_ = std::thread(
            [this, clock = std::move(clock)]()
            {
                auto next = std::chrono::steady_clock::now();
                while (!stopRequested_)
                {
                    sampleAt(clock());
                    next += std::chrono::milliseconds(config_.periodMs);
                    std::unique_lock lk(mutex_);
                    stopCv_.wait_until(lk, next, [this] { return stopRequested_.load(); });
                }
                sampleAt(clock());
            });
    }

    void stop()
    {
        if (!thread_.joinable()) { return; }
        {
            std::lock_guard lk(mutex_);
            stopRequested_ = true;
        }
        stopCv_.notify_all();
        thread_.join();
        running_ = false;
        cv_.notify_all();
    }

    bool running() const { return running_; }

    /*! @brief Block until a sample at or after t exists
     *
     * Returns false on timeout, when the sampler failed or when no background thread runs.
     */
    bool waitUntilCovered(Micros t, std::chrono::milliseconds timeout) const
    {
        std::unique_lock lk(mutex_);
        return cv_.wait_for(lk, timeout,
                            [&] { return (!times_.empty() && times_.back() >= t) || failed_ || !running_; }) &&
               !times_.empty() && times_.back() >= t;
    }

    //! @brief cumulative energy of a sensor at t, linearly interpolated between samples
    double accumulatorAt(const SensorId& sensor, Micros t) const
    {
        auto idx = topo_.indexOf(sensor);
        if (!idx) { throw Error("sensor " + sensor.key() + " not in topology"); }
        std::lock_guard lk(mutex_);
        return accumulatorAtLocked(*idx, t);
    }

    //! @brief consistent accumulator values of several sensors at the same instant
    std::vector<double> snapshot(const std::vector<std::size_t>& sensorIndices, Micros t) const
    {
        std::lock_guard     lk(mutex_);
        std::vector<double> out;
        out.reserve(sensorIndices.size());
        for (auto i : sensorIndices)
        {
            out.push_back(accumulatorAtLocked(i, t));
        }
        return out;
    }

    //! @brief largest power seen on the sensor so far
    double maxPower(const SensorId& sensor) const
    {
        auto idx = topo_.indexOf(sensor);
        if (!idx) { throw Error("sensor " + sensor.key() + " not in topology"); }
        std::lock_guard lk(mutex_);
        return maxPower_[*idx];
    }

    std::size_t sampleCount() const
    {
        std::lock_guard lk(mutex_);
        return times_.size();
    }

    bool failed() const { return failed_; }

    std::string errorMessage() const
    {
        std::lock_guard lk(mutex_);
        return error_;
    }

    std::vector<std::string> takeWarnings()
    {
        std::lock_guard lk(mutex_);
        return std::exchange(warnings_, {});
    }

private:
    double accumulatorAtLocked(std::size_t i, Micros t) const
    {
        if (times_.empty() || t < times_.front())
        {
            warnings_.push_back("accumulator query at " + std::to_string(t) + " us precedes the first sample");
            return 0.0;
        }
        if (t > times_.back())
        {
            warnings_.push_back("accumulator query at " + std::to_string(t) + " us follows the last sample");
            return acc_.back()[i];
        }
        auto   hi = std::size_t(std::lower_bound(times_.begin(), times_.end(), t) - times_.begin());
        if (times_[hi] == t) { return acc_[hi][i]; }
        auto   lo = hi - 1;
        double w  = double(t - times_[lo]) / double(times_[hi] - times_[lo]);
        return acc_[lo][i] + w * (acc_[hi][i] - acc_[lo][i]);
    }

    void fail(const std::string& what)
    {
        std::lock_guard lk(mutex_);
        failLocked(what);
    }

    void failLocked(const std::string& what)
    {
        if (!failed_) { error_ = what; }
        failed_ = true;
        cv_.notify_all();
    }

    PowerBackend&  backend_;
    const Topology& topo_;
    SamplerConfig  config_;

    mutable std::mutex              mutex_;
    mutable std::condition_variable cv_;
    std::condition_variable         stopCv_;
    std::vector<Micros>              times_;
    std::vector<std::vector<double>> acc_;
    std::vector<double>              lastRaw_;
    std::vector<double>              maxPower_;
    mutable std::vector<std::string> warnings_;
    std::string                      error_;
    std::atomic<bool>                failed_{false};
    std::atomic<bool>                running_{false};
    std::atomic<bool>                stopRequested_{false};
    std::thread                      thread_;
};

//! @brief one instrumented region invocation on one rank
struct RegionRecord
{
    std::string                runId;
    int                        rank{0};
    std::string                region;
    std::uint64_t              seq{0};
    Micros                     startUs{0};
    Micros                     endUs{0};
    double                     durationS{0};
    std::map<SensorId, double> energyJ;
    bool                       degraded{false};
    bool                       approximate{false};

    bool operator==(const RegionRecord&) const = default;
};

/*! @brief Region bracketing for one rank
 *
 * Regions nest as a strict stack. Confined to one thread at a time.
 */
class RankContext
{
public:
    RankContext(Sampler& sampler, int rank, std::string runId)
        : sampler_(sampler)
        , rank_(rank)
        , runId_(std::move(runId))
        , sensors_(sensorsForRank(sampler.topology(), rank))
    {
        if (!detail::isValidName(runId_)) { throw Error("invalid run id '" + runId_ + "'"); }
        for (const auto& s : sensors_)
        {
            indices_.push_back(*sampler.topology().indexOf(s));
        }
    }

    int                          rank() const { return rank_; }
    const std::vector<SensorId>& sensors() const { return sensors_; }
    std::size_t                  depth() const { return stack_.size(); }
    std::size_t                  buffered() const { return buffer_.size(); }

    void regionBegin(const std::string& region, Micros tUs)
    {
        if (!detail::isValidName(region)) { throw Error("invalid region name '" + region + "'"); }
        if (!stack_.empty() && tUs < stack_.back().startUs)
        {
            throw Error("region " + region + " begins before its enclosing region " + stack_.back().region);
        }
        bool degraded = sampler_.failed();
        awaitSample(tUs);
        stack_.push_back({region, tUs, sampler_.snapshot(indices_, tUs), degraded || sampler_.failed()});
    }

    RegionRecord regionEnd(const std::string& region, Micros tUs)
    {
        if (stack_.empty()) { throw Error("region_end(" + region + ") without an open region"); }
        const auto& top = stack_.back();
        if (top.region != region)
        {
            throw Error("stack discipline violation: expected end of " + top.region + ", got " + region);
        }
        if (tUs <= top.startUs) { throw Error("region " + region + " ends before it begins"); }

        awaitSample(tUs);
        auto now = sampler_.snapshot(indices_, tUs);

        RegionRecord rec;
        rec.runId     = runId_;
        rec.rank      = rank_;
        rec.region    = region;
        rec.seq       = nextSeq_++;
        rec.startUs   = top.startUs;
        rec.endUs     = tUs;
        rec.durationS = double(tUs - top.startUs) * 1e-6;
        rec.degraded  = top.degraded || sampler_.failed();
        for (std::size_t i = 0; i < sensors_.size(); ++i)
        {
            rec.energyJ[sensors_[i]] = std::max(0.0, now[i] - top.snapshot[i]);
        }
        stack_.pop_back();
        buffer_.push_back(rec);
        return rec;
    }

    //! @brief hand over and clear the buffered records; all regions must be closed
    std::vector<RegionRecord> flush()
    {
        if (!stack_.empty())
        {
            std::string open;
            for (const auto& f : stack_)
            {
                open += (open.empty() ? "" : ", ") + f.region;
            }
            throw Error("open regions: " + open);
        }
        return std::exchange(buffer_, {});
    }

private:
    struct Frame
    {
        std::string         region;
        Micros              startUs;
        std::vector<double> snapshot;
        bool                degraded;
    };

    void awaitSample(Micros tUs)
    {
        if (!sampler_.running()) { return; }
        auto timeout = std::chrono::milliseconds(2 * sampler_.config().periodMs + 1000);
        sampler_.waitUntilCovered(tUs, timeout);
    }

    Sampler&                  sampler_;
    int                       rank_;
    std::string               runId_;
    std::vector<SensorId>     sensors_;
    std::vector<std::size_t>  indices_;
    std::vector<Frame>        stack_;
    std::vector<RegionRecord> buffer_;
    std::uint64_t             nextSeq_{0};
};

} // namespace emeter
