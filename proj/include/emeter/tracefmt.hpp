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
 * @brief Record files: per-rank output and the merged run file
 *
 * Layout:
 *   #!run_id=<id>
 *   #!topology_digest=<16 hex digits, FNV-1a of the canonical topology>
 *   #!backend=<counters|replay|synthetic>
 *   #!period_ms=<n>
 *   #!frequency_mhz=<mhz or ->
 *   #!created=<text>
 *   run_id|rank|region|seq|start_us|end_us|duration_s|<node>:<kind><i>=joules;...|flags
 *   #=<count> <checksum>
 *
 * Joules and seconds are written with 6 fractional digits, the checksum is FNV-1a over the body
 * lines including their newlines. Serialization is canonical: write(read(f)) reproduces f.
 */

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <set>

#include "meter.hpp"

namespace emeter
{

struct RunHeader
{
    std::string           runId;
    std::uint64_t         topologyDigest{0};
    std::string           backend{"synthetic"};
    unsigned              periodMs{100};
    std::optional<double> frequencyMhz;
    std::string           created;

    bool operator==(const RunHeader&) const = default;
};

struct RunFile
{
    RunHeader                 header;
    std::vector<RegionRecord> records;

    bool operator==(const RunFile&) const = default;
};

//! @brief SOURCE_DATE_EPOCH when set, the current UTC time otherwise
inline std::string creationTimestamp()
{
    std::time_t t = std::time(nullptr);
    if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"))
    {
        long long v = 0;
        if (detail::parseNumber(std::string_view(sde), v)) { t = std::time_t(v); }
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace detail
{

inline std::string shortestDouble(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline std::string formatRecord(const RegionRecord& r)
{
    std::string line;
    line += r.runId + "|" + std::to_string(r.rank) + "|" + r.region + "|" + std::to_string(r.seq) + "|" +
            std::to_string(r.startUs) + "|" + std::to_string(r.endUs) + "|" + fixed(r.durationS) + "|";
    if (r.energyJ.empty()) { line += "-"; }
    bool first = true;
    for (const auto& [sensor, joules] : r.energyJ)
    {
        if (!first) { line += ";"; }
        first = false;
        line += sensor.key() + "=" + fixed(joules);
    }
    line += "|";
    std::vector<std::string> flags;
    if (r.degraded) { flags.push_back("degraded"); }
    if (r.approximate) { flags.push_back("approximate"); }
    if (flags.empty()) { line += "-"; }
    for (std::size_t i = 0; i < flags.size(); ++i)
    {
        line += (i ? "," : "") + flags[i];
    }
    return line;
}

inline RegionRecord parseRecord(std::string_view line, const std::string& source, std::size_t lineNo)
{
    auto fail   = [&](const std::string& what) { throw SyntaxError(source, lineNo, what); };
    auto fields = split(line, '|');
    if (fields.size() != 9) { fail("record needs 9 '|'-separated fields, found " + std::to_string(fields.size())); }

    RegionRecord r;
    r.runId  = std::string(fields[0]);
    r.region = std::string(fields[2]);
    if (!isValidName(r.runId)) { fail("invalid run id"); }
    if (!isValidName(r.region)) { fail("invalid region name"); }
    if (!parseNumber(fields[1], r.rank) || r.rank < 0) { fail("bad rank"); }
    if (!parseNumber(fields[3], r.seq)) { fail("bad seq"); }
    if (!parseNumber(fields[4], r.startUs)) { fail("bad start_us"); }
    if (!parseNumber(fields[5], r.endUs)) { fail("bad end_us"); }
    if (!parseNumber(fields[6], r.durationS)) { fail("bad duration_s"); }
    if (r.endUs <= r.startUs) { fail("end_us must exceed start_us"); }
    if (std::abs(r.durationS - double(r.endUs - r.startUs) * 1e-6) > 1e-6)
    {
        fail("duration_s disagrees with start_us/end_us");
    }

    if (fields[7] != "-")
    {
        for (auto entry : split(fields[7], ';'))
        {
            auto eq = entry.find('=');
            if (eq == std::string_view::npos) { fail("energy entry without '='"); }
            auto   sensor = SensorId::fromKey(entry.substr(0, eq));
            double joules = 0;
            if (!sensor) { fail("bad sensor key '" + std::string(entry.substr(0, eq)) + "'"); }
            if (!parseNumber(entry.substr(eq + 1), joules) || joules < 0) { fail("bad energy value"); }
            if (!r.energyJ.emplace(*sensor, joules).second) { fail("sensor listed twice"); }
        }
    }
    if (fields[8] != "-")
    {
        for (auto flag : split(fields[8], ','))
        {
            if (flag == "degraded") { r.degraded = true; }
            else if (flag == "approximate") { r.approximate = true; }
            else { fail("unknown flag '" + std::string(flag) + "'"); }
        }
    }
    return r;
}

} // namespace detail

inline std::string renderRunFile(const RunFile& run)
{
    const auto& h = run.header;
    std::string out;
    out += "#!run_id=" + h.runId + "\n";
    out += "#!topology_digest=" + detail::hex64(h.topologyDigest) + "\n";
    out += "#!backend=" + h.backend + "\n";
    out += "#!period_ms=" + std::to_string(h.periodMs) + "\n";
    out += "#!frequency_mhz=" + (h.frequencyMhz ? detail::shortestDouble(*h.frequencyMhz) : std::string("-")) + "\n";
    out += "#!created=" + h.created + "\n";

    detail::Fnv1a checksum;
    for (const auto& r : run.records)
    {
        auto line = detail::formatRecord(r) + "\n";
        checksum.update(line);
        out += line;
    }
    out += "#=" + std::to_string(run.records.size()) + " " + detail::hex64(checksum.value()) + "\n";
    return out;
}

inline RunFile parseRunFile(std::string_view text, const std::string& source = "<run>")
{
    RunFile                            run;
    std::map<std::string, std::string> header;
    std::optional<std::pair<std::size_t, std::string>> footer;
    detail::Fnv1a                      checksum;

    auto        lines  = detail::split(text, '\n');
    std::size_t lineNo = 0;
    for (auto line : lines)
    {
        ++lineNo;
        if (line.empty()) { continue; }
        auto fail = [&](const std::string& what) { throw SyntaxError(source, lineNo, what); };
        if (footer) { fail("content after footer"); }
        if (line.starts_with("#!"))
        {
            if (!run.records.empty()) { fail("header line after records"); }
            auto eq = line.find('=');
            if (eq == std::string_view::npos) { fail("header line without '='"); }
            header[std::string(line.substr(2, eq - 2))] = std::string(line.substr(eq + 1));
        }
        else if (line.starts_with("#="))
        {
            auto tok = detail::tokenize(line.substr(2));
            std::size_t count = 0;
            if (tok.size() != 2 || !detail::parseNumber(tok[0], count)) { fail("malformed footer"); }
            footer = {count, std::string(tok[1])};
        }
        else
        {
            checksum.update(line);
            checksum.update("\n");
            run.records.push_back(detail::parseRecord(line, source, lineNo));
        }
    }

    if (!footer) { throw Error(source + ": missing footer (truncated file?)"); }
    if (footer->first != run.records.size())
    {
        throw Error(source + ": footer count " + std::to_string(footer->first) + " but " +
                    std::to_string(run.records.size()) + " records");
    }
    if (footer->second != detail::hex64(checksum.value())) { throw Error(source + ": checksum mismatch"); }

    auto need = [&](const std::string& key) -> const std::string&
    {
        auto it = header.find(key);
        if (it == header.end()) { throw Error(source + ": missing header field " + key); }
        return it->second;
    };
    auto& h = run.header;
    h.runId = need("run_id");
    if (!detail::isValidName(h.runId)) { throw Error(source + ": invalid run id"); }
    const auto& digest = need("topology_digest");
    auto [ptr, ec]     = std::from_chars(digest.data(), digest.data() + digest.size(), h.topologyDigest, 16);
    if (ec != std::errc{} || ptr != digest.data() + digest.size() || digest.size() != 16)
    {
        throw Error(source + ": bad topology digest");
    }
    h.backend = need("backend");
    if (!detail::parseNumber(std::string_view(need("period_ms")), h.periodMs)) { throw Error(source + ": bad period_ms"); }
    const auto& freq = need("frequency_mhz");
    if (freq != "-")
    {
        double f = 0;
        if (!detail::parseNumber(std::string_view(freq), f) || f <= 0) { throw Error(source + ": bad frequency_mhz"); }
        h.frequencyMhz = f;
    }
    h.created = need("created");

    for (const auto& r : run.records)
    {
        if (r.runId != h.runId) { throw Error(source + ": record run_id " + r.runId + " differs from header"); }
    }
    return run;
}

inline RunFile readRunFile(const std::string& path) { return parseRunFile(detail::readFile(path), path); }

//! @brief write via a temporary file and rename, so readers never see a partial file
inline void writeRunFile(const RunFile& run, const std::filesystem::path& path)
{
    for (const auto& r : run.records)
    {
        if (r.runId != run.header.runId) { throw Error("mixed run_ids: " + r.runId + " vs " + run.header.runId); }
    }
    if (!detail::isValidName(run.header.runId)) { throw Error("invalid run id '" + run.header.runId + "'"); }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) { throw Error("cannot write " + tmp.string()); }
        out << renderRunFile(run);
        out.flush();
        if (!out) { throw Error("write failure on " + tmp.string()); }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) { throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message()); }
}

inline void writeRankFile(const std::vector<RegionRecord>& records, const RunHeader& header,
                          const std::filesystem::path& path)
{
    std::set<int> ranks;
    for (const auto& r : records)
    {
        ranks.insert(r.rank);
    }
    if (ranks.size() > 1) { throw Error("rank file " + path.string() + " would mix records of several ranks"); }
    writeRunFile(RunFile{header, records}, path);
}

/*! @brief Combine rank files into one run, sorted by (start_us, rank, seq)
 *
 * The inputs must agree on run id, topology digest, backend, period and frequency label;
 * the earliest creation time is kept. The result does not depend on the input order.
 */
inline RunFile mergeRunFiles(const std::vector<RunFile>& files)
{
    if (files.empty()) { throw Error("merge needs at least one file"); }
    RunFile out;
    out.header = files.front().header;
    for (const auto& f : files)
    {
        const auto& h = f.header;
        if (h.runId != out.header.runId) { throw Error("run_id mismatch: " + h.runId + " vs " + out.header.runId); }
        if (h.topologyDigest != out.header.topologyDigest) { throw Error("topology digest mismatch"); }
        if (h.backend != out.header.backend || h.periodMs != out.header.periodMs ||
            h.frequencyMhz != out.header.frequencyMhz)
        {
            throw Error("header mismatch (backend, period or frequency) in run " + h.runId);
        }
        out.header.created = std::min(out.header.created, h.created);
        out.records.insert(out.records.end(), f.records.begin(), f.records.end());
    }
    std::sort(out.records.begin(), out.records.end(),
              [](const RegionRecord& a, const RegionRecord& b)
              { return std::tie(a.startUs, a.rank, a.seq) < std::tie(b.startUs, b.rank, b.seq); });
    std::set<std::pair<int, std::uint64_t>> keys;
    for (const auto& r : out.records)
    {
        if (!keys.insert({r.rank, r.seq}).second)
        {
            throw Error("duplicate record rank " + std::to_string(r.rank) + " seq " + std::to_string(r.seq));
        }
    }
    return out;
}

inline RunFile merge(const std::vector<std::string>& paths)
{
    std::vector<RunFile> files;
    for (const auto& p : paths)
    {
        files.push_back(readRunFile(p));
    }
    return mergeRunFiles(files);
}

} // namespace emeter
