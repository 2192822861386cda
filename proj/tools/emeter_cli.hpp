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
 * @brief emeter command line: simulate, record, merge, report-devices, report-functions, edp, validate
 *
 * Exit codes: 0 success, 1 data error, 2 usage error. Reports go to the output stream,
 * warnings and errors to the error stream.
 */

#pragma once

#include <CLI11.hpp>

#include "emeter/emeter.hpp"

namespace emeter::cli
{

struct ScriptEvent
{
    bool        begin;
    std::string region;
    Micros      tUs;
};

//! @brief region script: "begin <name> <t_us>" / "end <name> <t_us>", times non-decreasing
inline std::vector<ScriptEvent> parseRegionScript(std::string_view text, const std::string& source)
{
    std::vector<ScriptEvent> events;
    std::size_t              lineNo = 0;
    for (auto raw : detail::split(text, '\n'))
    {
        ++lineNo;
        auto tok = detail::tokenize(detail::stripComment(raw));
        if (tok.empty()) { continue; }
        auto fail = [&](const std::string& what) { throw SyntaxError(source, lineNo, what); };
        if (tok.size() != 3 || (tok[0] != "begin" && tok[0] != "end")) { fail("expected 'begin|end <name> <t_us>'"); }
        ScriptEvent ev{tok[0] == "begin", std::string(tok[1]), 0};
        if (!detail::parseNumber(tok[2], ev.tUs)) { fail("bad timestamp '" + std::string(tok[2]) + "'"); }
        if (!events.empty() && ev.tUs < events.back().tUs) { fail("timestamps must not decrease"); }
        events.push_back(std::move(ev));
    }
    if (events.empty()) { throw Error(source + ": region script is empty"); }
    return events;
}

namespace detail
{

inline void printWarnings(std::ostream& err, const std::vector<std::string>& warnings)
{
    for (const auto& w : warnings)
    {
        err << "warning: " << w << "\n";
    }
}

inline std::string defaultRunId(const std::string& prefix, std::optional<double> freq)
{
    return freq ? prefix + "-" + emeter::detail::shortestDouble(*freq) : prefix;
}

inline void runScript(RankContext& ctx, Sampler& sampler, const std::vector<ScriptEvent>& events, bool realTime,
                      const std::function<Micros()>& clock)
{
    const Micros period = sampler.config().periodUs();
    Micros       last   = events.front().tUs - period;
    for (const auto& ev : events)
    {
        if (realTime)
        {
            while (clock() < ev.tUs)
            {
                std::this_thread::sleep_for(std::chrono::microseconds(200));
            }
        }
        else
        {
            while (last < ev.tUs)
            {
                last += period;
                sampler.sampleAt(last);
            }
        }
        if (ev.begin) { ctx.regionBegin(ev.region, ev.tUs); }
        else { ctx.regionEnd(ev.region, ev.tUs); }
    }
}

} // namespace detail

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Region-based energy measurement and analysis", "emeter"};
    app.require_subcommand(1, 1);

    // simulate
    std::string                 workloadPath, modelPath, topoPath, outDir, runId;
    std::optional<double>       freq;
    auto*                       simulate = app.add_subcommand("simulate", "Run the synthetic workload and write rank files");
    simulate->add_option("--workload", workloadPath, "Workload config file")->required();
    simulate->add_option("--model", modelPath, "Synthetic power model file")->required();
    simulate->add_option("--topology", topoPath, "Topology file")->required();
    simulate->add_option("--out-dir", outDir, "Directory receiving rank<r>.rec files")->required();
    simulate->add_option("--freq", freq, "GPU frequency in MHz (default: the model's current frequency)");
    simulate->add_option("--run-id", runId, "Run identifier (default: sim-<freq>)");

    // record
    std::string backendSpec, scriptPath, outFile;
    int         rank = 0;
    double      speed = 0;
    auto*       record = app.add_subcommand("record", "Measure the regions of a region script against a backend");
    record->add_option("--backend", backendSpec, "counters:DIR or replay:TRACE")->required();
    record->add_option("--topology", topoPath, "Topology file")->required();
    record->add_option("--script", scriptPath, "Region script (begin/end <name> <t_us> lines)")->required();
    record->add_option("--out", outFile, "Rank file to write")->required();
    record->add_option("--rank", rank, "Rank the script belongs to")->default_val(0);
    record->add_option("--run-id", runId, "Run identifier (default: rec)");
    record->add_option("--freq", freq, "Frequency label in MHz");
    record->add_option("--speed", speed, "Pace a replay in real time at this speed factor");

    // merge
    std::vector<std::string> inputs;
    auto*                    mergeCmd = app.add_subcommand("merge", "Merge rank files into one run file");
    mergeCmd->add_option("files", inputs, "Rank files")->required();
    mergeCmd->add_option("--out", outFile, "Run file to write")->required();

    // report-devices
    std::string runPath;
    auto*       devices = app.add_subcommand("report-devices", "Energy per device kind and node");
    devices->add_option("run", runPath, "Run file")->required();
    devices->add_option("--topology", topoPath, "Topology file")->required();

    // report-functions
    std::size_t topK = 3;
    auto*       functions = app.add_subcommand("report-functions", "Energy per region and device kind");
    functions->add_option("run", runPath, "Run file")->required();
    functions->add_option("--topology", topoPath, "Topology file")->required();
    functions->add_option("--top", topK, "Number of regions flagged as top consumers")->default_val(3);

    // edp
    double baseline    = 0;
    bool   perFunction = false;
    auto*  edp = app.add_subcommand("edp", "Energy-delay product across frequencies");
    edp->add_option("runs", inputs, "Run files, one per frequency")->required();
    edp->add_option("--baseline", baseline, "Baseline frequency in MHz")->required();
    edp->add_flag("--per-function", perFunction, "Also report EDP per region");

    // validate
    double      jobEnergy = 0;
    std::string jobWindow, nodeTrace;
    auto*       validate = app.add_subcommand("validate", "Compare against job-level energy accounting");
    validate->add_option("run", runPath, "Run file")->required();
    validate->add_option("--job-energy", jobEnergy, "Job energy in joules")->required();
    validate->add_option("--job-window", jobWindow, "Job window START_US,END_US")->required();
    validate->add_option("--node-trace", nodeTrace, "Node power trace (replay format)")->required();

    std::vector<char*> argv;
    for (auto& a : args)
    {
        argv.push_back(a.data());
    }
    try
    {
        app.parse(int(argv.size()), argv.data());
    }
    catch (const CLI::CallForHelp& e)
    {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return 0;
    }
    catch (const CLI::ParseError& e)
    {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }

    try
    {
        if (simulate->parsed())
        {
            auto topo     = loadTopology(topoPath);
            auto model    = SyntheticModel::load(modelPath);
            auto workload = WorkloadConfig::load(workloadPath);
            auto sampling = SamplerConfig::fromEnv();
            double f      = freq.value_or(model.currentMhz);
            if (runId.empty()) { runId = detail::defaultRunId("sim", f); }

            std::vector<std::string> warnings;
            auto perRank = runWorkload(workload, model, topo, sampling, runId, f, &warnings);
            RunHeader header{runId, topologyDigest(topo), "synthetic", sampling.periodMs, f, creationTimestamp()};
            auto paths = writeRankFiles(perRank, header, outDir);
            detail::printWarnings(err, warnings);
            for (const auto& p : paths)
            {
                out << p.string() << "\n";
            }
        }
        else if (record->parsed())
        {
            auto topo     = loadTopology(topoPath);
            auto sampling = SamplerConfig::fromEnv();
            auto events   = parseRegionScript(emeter::detail::readFile(scriptPath), scriptPath);
            if (runId.empty()) { runId = "rec"; }

            auto colon = backendSpec.find(':');
            if (colon == std::string::npos) { throw CLI::ValidationError("--backend", "expected counters:DIR or replay:TRACE"); }
            auto kind = backendSpec.substr(0, colon);
            auto path = backendSpec.substr(colon + 1);

            std::unique_ptr<PowerBackend> backend;
            bool                          realTime = true;
            double                        pace     = 1.0;
            if (kind == "counters") { backend = std::make_unique<CounterFilesBackend>(path, topo); }
            else if (kind == "replay")
            {
                pace     = speed > 0 ? speed : 1.0;
                realTime = speed > 0;
                backend  = std::make_unique<ReplayBackend>(ReplayTrace::load(path), topo, pace);
            }
            else { throw CLI::ValidationError("--backend", "unknown backend kind '" + kind + "'"); }

            Sampler     sampler(*backend, topo, sampling);
            RankContext ctx(sampler, rank, runId);
            auto        clock = scaledSteadyClock(events.front().tUs, pace);
            if (realTime) { sampler.start(clock); }
            try
            {
                detail::runScript(ctx, sampler, events, realTime, clock);
            }
            catch (...)
            {
                sampler.stop();
                throw;
            }
            sampler.stop();
            if (sampler.failed()) { err << "warning: sampler error: " << sampler.errorMessage() << "\n"; }
            detail::printWarnings(err, sampler.takeWarnings());

            RunHeader header{runId, topologyDigest(topo), backend->kindName(), sampling.periodMs, freq,
                             creationTimestamp()};
            auto records = ctx.flush();
            writeRankFile(records, header, outFile);
            out << outFile << ": " << records.size() << " records\n";
        }
        else if (mergeCmd->parsed())
        {
            auto run = merge(inputs);
            writeRunFile(run, outFile);
            out << outFile << ": " << run.records.size() << " records\n";
        }
        else if (devices->parsed())
        {
            auto b = reportDevices(readRunFile(runPath), loadTopology(topoPath));
            detail::printWarnings(err, b.warnings);
            out << renderDeviceReport(b);
        }
        else if (functions->parsed())
        {
            auto f = reportFunctions(readRunFile(runPath), loadTopology(topoPath), topK);
            detail::printWarnings(err, f.warnings);
            out << renderFunctionReport(f);
        }
        else if (edp->parsed())
        {
            std::vector<RunFile> runs;
            for (const auto& p : inputs)
            {
                runs.push_back(readRunFile(p));
            }
            auto table = edpTable(runs, baseline);
            if (perFunction)
            {
                auto fe = edpPerFunction(runs, baseline);
                detail::printWarnings(err, fe.warnings);
                out << renderEdpReport(table, &fe);
            }
            else { out << renderEdpReport(table); }
        }
        else if (validate->parsed())
        {
            auto   parts = emeter::detail::split(jobWindow, ',');
            Micros start = 0, end = 0;
            if (parts.size() != 2 || !emeter::detail::parseNumber(parts[0], start) ||
                !emeter::detail::parseNumber(parts[1], end) || end <= start)
            {
                throw CLI::ValidationError("--job-window", "expected START_US,END_US with END_US > START_US");
            }
            auto report = validateAgainstJob(readRunFile(runPath), jobEnergy, start, end, ReplayTrace::load(nodeTrace));
            if (report.inconsistent)
            {
                err << "warning: inconsistent: tool energy exceeds job energy by more than "
                    << emeter::detail::fixed(validationTolerance * 100, 1) << "%\n";
            }
            out << renderValidationReport(report);
        }
    }
    catch (const CLI::ValidationError& e)
    {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace emeter::cli
