// SPDX-License-Identifier: Apache-2.0
//
// mdmimo-sim: Monte-Carlo simulator for mobile distributed MIMO networks
// Copyright (C) 2026 The mdmimo-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef mdmimo_experiment_H
#define mdmimo_experiment_H

#include "mdmimo/link_adaptation.hpp"
#include "mdmimo/protocol.hpp"
#include "mdmimo/rc_predictor.hpp"
#include "mdmimo/scenario.hpp"
#include "mdmimo/sync.hpp"

#include <json.hpp>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mdmimo
{

inline constexpr const char *version_string = "0.1.0";

enum class SweepVariable
{
    DistanceM,
    NumRus,
    NumUes,
    Mobility,
    CfoHz
};

inline std::string_view to_string(SweepVariable v)
{
    switch (v)
    {
    case SweepVariable::DistanceM:
        return "distance_m";
    case SweepVariable::NumRus:
        return "num_rus";
    case SweepVariable::NumUes:
        return "num_ues";
    case SweepVariable::Mobility:
        return "mobility";
    case SweepVariable::CfoHz:
        return "cfo_hz";
    }
    return "?";
}

inline SweepVariable parse_sweep_variable(std::string_view s)
{
    for (auto v : {SweepVariable::DistanceM, SweepVariable::NumRus, SweepVariable::NumUes, SweepVariable::Mobility,
                   SweepVariable::CfoHz})
        if (s == to_string(v))
            return v;
    throw std::invalid_argument("Unknown sweep variable '" + std::string(s) + "'.");
}

enum class EmitFormat
{
    Csv,
    Json
};

inline EmitFormat parse_emit_format(std::string_view s)
{
    if (s == "csv")
        return EmitFormat::Csv;
    if (s == "json")
        return EmitFormat::Json;
    throw std::invalid_argument("Unknown output format '" + std::string(s) + "'.");
}

// 17 significant digits; parses back to exactly `v`.
inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Shortest decimal text that parses back to exactly `v`.
inline std::string shortest_double(double v)
{
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

struct SweepSpec
{
    SweepVariable variable = SweepVariable::DistanceM;
    std::vector<std::string> values; // canonical text: numbers via shortest_double, mobility labels lower-case
};

// Offsets applied to every RU; the gNB is the phase reference.
struct RuSyncSpec
{
    double cfo_hz = 0.0;
    double timing_offset_s = 0.0;
    double phase_offset_rad = 0.0;
    double phase_noise_std_rad_per_slot = 0.0;
};

struct ExperimentConfig
{
    Layout layout;
    SweepSpec sweep;
    int trials = 200;
    std::uint64_t seed_root = 1;
    std::string output_path;
    EmitFormat emit_format = EmitFormat::Csv;
    std::optional<CsiSource> csi; // study default when empty
    double csi_age_s = -1.0;
    std::vector<int> ru_counts;  // inner dimension of the downlink study
    std::vector<int> ue_counts;  // inner dimension of the mobility study
    RuSyncSpec sync;
    ChannelOptions channel;
    std::vector<McsEntry> mcs = default_mcs_table();
    std::string mcs_table_path;
    double overhead = default_overhead;
    int threads = 1;
};

inline const std::set<std::string> &allowed_units()
{
    static const std::set<std::string> u{"bps/Hz", "Mbps", "dB", "ratio"};
    return u;
}

struct ResultRecord
{
    std::string sweep_value;
    std::uint64_t seed = 0;
    std::string metric_name;
    double metric_value = 0.0;
    std::string units;

    bool operator==(const ResultRecord &) const = default;
};

// ---------- Config ----------

inline std::vector<std::string> split_list(const std::string &s)
{
    std::vector<std::string> out;
    boost::split(out, s, boost::is_any_of(","));
    for (auto &v : out)
        boost::trim(v);
    std::erase_if(out, [](const std::string &v) { return v.empty(); });
    return out;
}

inline std::vector<std::string> validate(const ExperimentConfig &c)
{
    std::vector<std::string> out;
    if (c.trials < 1)
        out.push_back("sweep.trials: must be a positive integer");
    if (c.sweep.values.empty())
        out.push_back("sweep.values: must not be empty");
    for (const auto &v : c.sweep.values)
    {
        const std::string bad = "sweep.values: '" + v + "' is not valid for " + std::string(to_string(c.sweep.variable));
        try
        {
            if (c.sweep.variable == SweepVariable::Mobility)
            {
                if (parse_mobility_label(v) == MobilityLabel::Custom)
                    out.push_back(bad);
                continue;
            }
            std::size_t used = 0;
            const double x = std::stod(v, &used);
            const bool integral = std::floor(x) == x;
            bool ok = used == v.size() && std::isfinite(x);
            switch (c.sweep.variable)
            {
            case SweepVariable::DistanceM:
                ok = ok && x > 0.0;
                break;
            case SweepVariable::NumRus:
                ok = ok && integral && x >= 0.0;
                break;
            case SweepVariable::NumUes:
                ok = ok && integral && x >= 1.0;
                break;
            default:
                break;
            }
            if (!ok)
                out.push_back(bad);
        }
        catch (const std::exception &)
        {
            out.push_back(bad);
        }
    }
    for (int k : c.ru_counts)
        if (k < 0)
            out.push_back("sweep.ru_counts: counts must be non-negative");
    for (int k : c.ue_counts)
        if (k < 1)
            out.push_back("sweep.ue_counts: counts must be positive");
    if (c.threads < 1)
        out.push_back("threads: must be positive");
    if (!(c.overhead > 0.0 && c.overhead <= 1.0))
        out.push_back("mcs.overhead: must lie in (0, 1]");
    try
    {
        check_mcs_table(c.mcs);
    }
    catch (const std::exception &e)
    {
        out.push_back(std::string("mcs.table: ") + e.what());
    }
    Scenario probe = build_scenario(c.layout, c.seed_root);
    for (auto &e : validate(probe))
        out.push_back("scenario: " + e);
    return out;
}

namespace detail
{
template <class T>
void read_key(const boost::property_tree::ptree &sec, const std::string &key, T &into, std::set<std::string> &seen)
{
    if (auto v = sec.get_optional<T>(key))
        into = *v;
    else if (sec.count(key))
        throw std::invalid_argument("bad value for '" + key + "'");
    seen.insert(key);
}

inline void reject_unknown(const boost::property_tree::ptree &sec, const std::string &name,
                           const std::set<std::string> &known)
{
    for (const auto &[k, v] : sec)
        if (!known.count(k))
            throw std::invalid_argument("unknown key '" + name + "." + k + "'");
}

inline std::vector<int> parse_int_list(const std::string &s)
{
    std::vector<int> out;
    for (const auto &v : split_list(s))
    {
        std::size_t used = 0;
        const int x = std::stoi(v, &used);
        if (used != v.size())
            throw std::invalid_argument("'" + v + "' is not an integer");
        out.push_back(x);
    }
    return out;
}
} // namespace detail

// Parses an INI config. Errors carry the file path.
inline ExperimentConfig load_config(const std::string &path)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try
    {
        pt::read_ini(path, tree);
    }
    catch (const pt::ini_parser_error &e)
    {
        throw std::runtime_error("cannot read config '" + path + "': " + e.message());
    }

    ExperimentConfig c;
    auto &l = c.layout;
    try
    {
        static const std::set<std::string> sections{"scenario", "ofdm", "mobility", "sweep", "sync", "mcs"};
        for (const auto &[k, v] : tree)
            if (!sections.count(k))
                throw std::invalid_argument("unknown section [" + k + "]");
        const pt::ptree empty;
        auto section = [&](const char *n) -> const pt::ptree & {
            auto it = tree.find(n);
            return it == tree.not_found() ? empty : it->second;
        };
        std::set<std::string> seen;

        const auto &sc = section("scenario");
        std::string anchor = "gnb";
        detail::read_key(sc, "gnb_antennas", l.gnb_antennas, seen);
        detail::read_key(sc, "gnb_power_dbm", l.gnb_power_dbm, seen);
        detail::read_key(sc, "num_rus", l.num_rus, seen);
        detail::read_key(sc, "ru_antennas", l.ru_antennas, seen);
        detail::read_key(sc, "ru_power_dbm", l.ru_power_dbm, seen);
        detail::read_key(sc, "num_ues", l.num_ues, seen);
        detail::read_key(sc, "ue_antennas", l.ue_antennas, seen);
        detail::read_key(sc, "ue_power_dbm", l.ue_power_dbm, seen);
        detail::read_key(sc, "ue_distance_m", l.ue_distance_m, seen);
        detail::read_key(sc, "ue_cluster_radius_m", l.ue_cluster_radius_m, seen);
        detail::read_key(sc, "ru_anchor", anchor, seen);
        detail::read_key(sc, "ru_min_radius_m", l.ru_min_radius_m, seen);
        detail::read_key(sc, "ru_max_radius_m", l.ru_max_radius_m, seen);
        detail::read_key(sc, "antenna_height_m", l.antenna_height_m, seen);
        detail::read_key(sc, "noise_figure_db", l.noise_figure_db, seen);
        detail::read_key(sc, "duration_slots", l.duration_slots, seen);
        detail::reject_unknown(sc, "scenario", seen);
        if (anchor == "gnb")
            l.ru_anchor = RuAnchor::Gnb;
        else if (anchor == "ue")
            l.ru_anchor = RuAnchor::Ue;
        else
            throw std::invalid_argument("scenario.ru_anchor must be gnb or ue");

        seen.clear();
        const auto &of = section("ofdm");
        detail::read_key(of, "fc_hz", l.ofdm.fc_hz, seen);
        detail::read_key(of, "scs_hz", l.ofdm.scs_hz, seen);
        detail::read_key(of, "num_subcarriers", l.ofdm.num_subcarriers, seen);
        detail::read_key(of, "symbols_per_slot", l.ofdm.symbols_per_slot, seen);
        detail::read_key(of, "num_groups", c.channel.num_groups, seen);
        detail::reject_unknown(of, "ofdm", seen);

        seen.clear();
        const auto &mo = section("mobility");
        std::string profile = "low";
        double gnb_kmh = -1.0, ue_kmh = -1.0;
        detail::read_key(mo, "profile", profile, seen);
        detail::read_key(mo, "gnb_speed_kmh", gnb_kmh, seen);
        detail::read_key(mo, "ue_relative_speed_kmh", ue_kmh, seen);
        detail::reject_unknown(mo, "mobility", seen);
        const auto label = parse_mobility_label(profile);
        if (label == MobilityLabel::Custom)
        {
            if (gnb_kmh < 0.0 || ue_kmh < 0.0)
                throw std::invalid_argument("custom mobility needs gnb_speed_kmh and ue_relative_speed_kmh");
            l.mobility = MobilityProfile::custom(gnb_kmh, ue_kmh);
        }
        else
        {
            if (gnb_kmh >= 0.0 || ue_kmh >= 0.0)
                throw std::invalid_argument("speeds may only be given with profile = custom");
            l.mobility = MobilityProfile::named(label);
        }

        seen.clear();
        const auto &sw = section("sweep");
        std::string variable = "distance_m", values, ru_counts, ue_counts, csi, model = "sum_of_sinusoids";
        long long seed = 1;
        detail::read_key(sw, "variable", variable, seen);
        detail::read_key(sw, "values", values, seen);
        detail::read_key(sw, "trials", c.trials, seen);
        detail::read_key(sw, "seed", seed, seen);
        detail::read_key(sw, "ru_counts", ru_counts, seen);
        detail::read_key(sw, "ue_counts", ue_counts, seen);
        detail::read_key(sw, "csi", csi, seen);
        detail::read_key(sw, "csi_age_s", c.csi_age_s, seen);
        detail::read_key(sw, "temporal_model", model, seen);
        detail::reject_unknown(sw, "sweep", seen);
        if (seed < 0)
            throw std::invalid_argument("sweep.seed must be non-negative");
        c.seed_root = static_cast<std::uint64_t>(seed);
        c.sweep.variable = parse_sweep_variable(variable);
        c.sweep.values = split_list(values);
        c.ru_counts = detail::parse_int_list(ru_counts);
        c.ue_counts = detail::parse_int_list(ue_counts);
        if (!csi.empty())
            c.csi = parse_csi_source(csi);
        if (model == "sum_of_sinusoids")
            c.channel.temporal_model = TemporalModel::SumOfSinusoids;
        else if (model == "gauss_markov")
            c.channel.temporal_model = TemporalModel::GaussMarkov;
        else
            throw std::invalid_argument("sweep.temporal_model must be sum_of_sinusoids or gauss_markov");

        seen.clear();
        const auto &sy = section("sync");
        detail::read_key(sy, "ru_cfo_hz", c.sync.cfo_hz, seen);
        detail::read_key(sy, "ru_timing_offset_s", c.sync.timing_offset_s, seen);
        detail::read_key(sy, "ru_phase_offset_rad", c.sync.phase_offset_rad, seen);
        detail::read_key(sy, "phase_noise_std_rad_per_slot", c.sync.phase_noise_std_rad_per_slot, seen);
        detail::reject_unknown(sy, "sync", seen);

        seen.clear();
        const auto &mc = section("mcs");
        double gap = default_implementation_gap_db;
        detail::read_key(mc, "table", c.mcs_table_path, seen);
        detail::read_key(mc, "implementation_gap_db", gap, seen);
        detail::read_key(mc, "overhead", c.overhead, seen);
        detail::reject_unknown(mc, "mcs", seen);
        if (!c.mcs_table_path.empty())
        {
            std::filesystem::path p(c.mcs_table_path);
            if (p.is_relative())
                p = std::filesystem::path(path).parent_path() / p;
            c.mcs_table_path = p.string();
            c.mcs = load_mcs_csv(c.mcs_table_path);
        }
        else
            c.mcs = default_mcs_table(gap);
    }
    catch (const std::invalid_argument &e)
    {
        throw std::invalid_argument("config '" + path + "': " + e.what());
    }
    catch (const std::out_of_range &e)
    {
        throw std::invalid_argument("config '" + path + "': value out of range");
    }

    // Canonical text for sweep values.
    for (auto &v : c.sweep.values)
    {
        if (c.sweep.variable == SweepVariable::Mobility)
            boost::to_lower(v);
        else
            try
            {
                std::size_t used = 0;
                const double x = std::stod(v, &used);
                if (used == v.size())
                    v = shortest_double(x);
            }
            catch (const std::exception &)
            {
            }
    }
    return c;
}

// Every field that influences results, one `key=value` per line in a fixed order.
inline std::string canonical_config(const ExperimentConfig &c)
{
    std::ostringstream o;
    const auto &l = c.layout;
    auto kv = [&](const char *k, const std::string &v) { o << k << '=' << v << '\n'; };
    auto num = [&](const char *k, double v) { kv(k, format_double(v)); };
    num("scenario.gnb_antennas", l.gnb_antennas);
    num("scenario.gnb_power_dbm", l.gnb_power_dbm);
    num("scenario.num_rus", l.num_rus);
    num("scenario.ru_antennas", l.ru_antennas);
    num("scenario.ru_power_dbm", l.ru_power_dbm);
    num("scenario.num_ues", l.num_ues);
    num("scenario.ue_antennas", l.ue_antennas);
    num("scenario.ue_power_dbm", l.ue_power_dbm);
    num("scenario.ue_distance_m", l.ue_distance_m);
    num("scenario.ue_cluster_radius_m", l.ue_cluster_radius_m);
    kv("scenario.ru_anchor", l.ru_anchor == RuAnchor::Gnb ? "gnb" : "ue");
    num("scenario.ru_min_radius_m", l.ru_min_radius_m);
    num("scenario.ru_max_radius_m", l.ru_max_radius_m);
    num("scenario.antenna_height_m", l.antenna_height_m);
    num("scenario.noise_figure_db", l.noise_figure_db);
    num("scenario.duration_slots", l.duration_slots);
    num("ofdm.fc_hz", l.ofdm.fc_hz);
    num("ofdm.scs_hz", l.ofdm.scs_hz);
    num("ofdm.num_subcarriers", l.ofdm.num_subcarriers);
    num("ofdm.symbols_per_slot", l.ofdm.symbols_per_slot);
    num("ofdm.num_groups", c.channel.num_groups);
    kv("mobility.profile", std::string(to_string(l.mobility.label)));
    num("mobility.gnb_speed_kmh", l.mobility.gnb_speed_kmh);
    num("mobility.ue_relative_speed_kmh", l.mobility.ue_relative_speed_kmh);
    kv("sweep.variable", std::string(to_string(c.sweep.variable)));
    kv("sweep.values", boost::join(c.sweep.values, ","));
    num("sweep.trials", c.trials);
    std::vector<std::string> rc, uc;
    for (int k : c.ru_counts)
        rc.push_back(std::to_string(k));
    for (int k : c.ue_counts)
        uc.push_back(std::to_string(k));
    kv("sweep.ru_counts", boost::join(rc, ","));
    kv("sweep.ue_counts", boost::join(uc, ","));
    kv("sweep.csi", c.csi ? std::string(to_string(*c.csi)) : "default");
    num("sweep.csi_age_s", c.csi_age_s);
    kv("sweep.temporal_model",
       c.channel.temporal_model == TemporalModel::SumOfSinusoids ? "sum_of_sinusoids" : "gauss_markov");
    num("sync.ru_cfo_hz", c.sync.cfo_hz);
    num("sync.ru_timing_offset_s", c.sync.timing_offset_s);
    num("sync.ru_phase_offset_rad", c.sync.phase_offset_rad);
    num("sync.phase_noise_std_rad_per_slot", c.sync.phase_noise_std_rad_per_slot);
    for (const auto &m : c.mcs)
        kv("mcs.entry", std::to_string(m.index) + ":" + std::string(to_string(m.modulation)) + ":" +
                            format_double(m.code_rate) + ":" + format_double(m.snr_threshold_db));
    num("mcs.overhead", c.overhead);
    return o.str();
}

// FNV-1a, 64 bit, as 16 hex digits.
inline std::string fnv1a_hex(std::string_view text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text)
    {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string config_hash(const ExperimentConfig &c) { return fnv1a_hex(canonical_config(c)); }

// ---------- Trial plumbing ----------

// Runs fn(i) for i in [0, n) on `threads` workers; results land in indexed slots.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)> &fn)
{
    const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1));
    if (workers <= 1)
    {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++)
            {
                try
                {
                    fn(i);
                }
                catch (...)
                {
                    std::lock_guard lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                }
            }
        });
    for (auto &t : pool)
        t.join();
    if (error)
        std::rethrow_exception(error);
}

inline std::uint64_t trial_seed(std::uint64_t root, int trial)
{
    return derive_seed(root, {static_cast<std::uint64_t>(trial)});
}

struct Metric
{
    std::string name;
    double value;
    std::string units;
};

// Applies one sweep value to a copy of the layout and RU sync offsets.
inline void apply_sweep_value(SweepVariable v, const std::string &value, Layout &layout, RuSyncSpec &sync)
{
    switch (v)
    {
    case SweepVariable::DistanceM:
        layout.ue_distance_m = std::stod(value);
        break;
    case SweepVariable::NumRus:
        layout.num_rus = std::stoi(value);
        break;
    case SweepVariable::NumUes:
        layout.num_ues = std::stoi(value);
        break;
    case SweepVariable::Mobility:
        layout.mobility = MobilityProfile::named(parse_mobility_label(value));
        break;
    case SweepVariable::CfoHz:
        sync.cfo_hz = std::stod(value);
        break;
    }
}

inline SyncState make_sync(const Scenario &s, const RuSyncSpec &spec)
{
    SyncState out;
    out.phase_noise_std_rad_per_slot = spec.phase_noise_std_rad_per_slot;
    for (const auto &r : s.rus())
        out.nodes[r.id] = NodeSync{spec.cfo_hz, spec.timing_offset_s, spec.phase_offset_rad};
    if (spec.phase_noise_std_rad_per_slot > 0.0)
    {
        Rng rng(derive_seed(s.seed, {tag(StreamTag::sync)}));
        out = evolve_phase_noise(std::move(out), rng);
    }
    return out;
}

struct SummaryStats
{
    double mean = 0.0;
    double ci95_half = 0.0;
    std::size_t n = 0;
};

// Mean and normal-approximation 95% half width.
inline SummaryStats summarize(std::span<const double> v)
{
    SummaryStats s;
    s.n = v.size();
    if (v.empty())
        return s;
    for (double x : v)
        s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1)
    {
        double ss = 0.0;
        for (double x : v)
            ss += (x - s.mean) * (x - s.mean);
        s.ci95_half = 1.959963984540054 * std::sqrt(ss / static_cast<double>(v.size() - 1)) /
                      std::sqrt(static_cast<double>(v.size()));
    }
    return s;
}

// Runs trials for every sweep value and flattens per-trial metrics plus summary rows
// (`<metric>/mean`, `<metric>/ci95_half`, seed = root) in sweep order.
inline std::vector<ResultRecord>
run_sweep(const ExperimentConfig &c,
          const std::function<std::vector<Metric>(const Layout &, const RuSyncSpec &, std::uint64_t)> &trial)
{
    if (auto errs = validate(c); !errs.empty())
        throw std::invalid_argument(errs.front());
    const std::size_t n_values = c.sweep.values.size();
    const std::size_t n_trials = static_cast<std::size_t>(c.trials);
    std::vector<std::vector<Metric>> slots(n_values * n_trials);
    parallel_for(slots.size(), c.threads, [&](std::size_t i) {
        Layout l = c.layout;
        RuSyncSpec sync = c.sync;
        apply_sweep_value(c.sweep.variable, c.sweep.values[i / n_trials], l, sync);
        slots[i] = trial(l, sync, trial_seed(c.seed_root, static_cast<int>(i % n_trials)));
    });

    std::vector<ResultRecord> out;
    for (std::size_t v = 0; v < n_values; ++v)
    {
        std::vector<std::string> order;
        std::map<std::string, std::pair<std::vector<double>, std::string>> by_metric;
        for (std::size_t t = 0; t < n_trials; ++t)
        {
            const std::uint64_t seed = trial_seed(c.seed_root, static_cast<int>(t));
            for (const auto &m : slots[v * n_trials + t])
            {
                if (!std::isfinite(m.value))
                    continue;
                out.push_back({c.sweep.values[v], seed, m.name, m.value, m.units});
                auto [it, fresh] = by_metric.try_emplace(m.name);
                if (fresh)
                {
                    order.push_back(m.name);
                    it->second.second = m.units;
                }
                it->second.first.push_back(m.value);
            }
        }
        for (const auto &name : order)
        {
            const auto &[vals, units] = by_metric[name];
            const auto st = summarize(vals);
            out.push_back({c.sweep.values[v], c.seed_root, name + "/mean", st.mean, units});
            out.push_back({c.sweep.values[v], c.seed_root, name + "/ci95_half", st.ci95_half, units});
        }
    }
    return out;
}

inline DownlinkOptions downlink_options(const ExperimentConfig &c)
{
    DownlinkOptions o;
    o.csi_age_s = c.csi_age_s;
    o.channel = c.channel;
    return o;
}

// ---------- Case studies ----------

// Single-UE phase-2 capacity of the virtual array against the direct gNB->UE link, per
// RU count. Metric names are prefixed `rus=<k>/`.
inline std::vector<ResultRecord> run_downlink_case_study(const ExperimentConfig &c)
{
    const CsiSource csi = c.csi.value_or(CsiSource::Perfect);
    const auto opt = downlink_options(c);
    return run_sweep(c, [&](const Layout &base, const RuSyncSpec &sync_spec, std::uint64_t seed) {
        std::vector<int> counts = c.ru_counts;
        if (c.sweep.variable == SweepVariable::NumRus || counts.empty())
            counts = {base.num_rus};
        std::vector<Metric> m;
        for (int k : counts)
        {
            Layout l = base;
            l.num_rus = k;
            const Scenario s = build_scenario(l, seed);
            const SyncState sync = make_sync(s, sync_spec);
            const auto round = run_downlink_round(s, sync, csi, opt);
            const auto direct = run_downlink_round(with_rus(s, {}), SyncState{}, csi, opt);
            const std::string p = "rus=" + std::to_string(k) + "/";
            const double base_c = direct.sum_phase2_bpshz();
            const double va = round.sum_phase2_bpshz();
            m.push_back({p + "baseline_capacity", base_c, "bps/Hz"});
            m.push_back({p + "virtual_array_capacity", va, "bps/Hz"});
            if (base_c > 0.0)
                m.push_back({p + "relative_gain", relative_gain(va, base_c), "ratio"});
            m.push_back({p + "phase1_rate", round.phase1_rate_bpshz, "bps/Hz"});
            m.push_back({p + "end_to_end_rate", round.sum_end_to_end_bpshz(), "bps/Hz"});
        }
        return m;
    });
}

// Uplink decode-and-forward per sweep value under each of the three named mobility
// profiles. Metric names are prefixed `<profile>/`.
inline std::vector<ResultRecord> run_uplink_case_study(const ExperimentConfig &c)
{
    UplinkOptions opt;
    opt.csi_age_s = c.csi_age_s;
    opt.channel = c.channel;
    opt.overhead = c.overhead;
    return run_sweep(c, [&](const Layout &base, const RuSyncSpec &sync_spec, std::uint64_t seed) {
        std::vector<MobilityLabel> profiles{MobilityLabel::Low, MobilityLabel::Medium, MobilityLabel::High};
        if (c.sweep.variable == SweepVariable::Mobility)
            profiles = {base.mobility.label};
        std::vector<Metric> m;
        for (auto label : profiles)
        {
            Layout l = base;
            l.mobility = MobilityProfile::named(label);
            const Scenario s = build_scenario(l, seed);
            const auto r = run_uplink_round(s, c.mcs, make_sync(s, sync_spec), opt);
            double mcs = 0.0, snr = 0.0, ber = 0.0;
            for (std::size_t u = 0; u < r.per_ue_mcs.size(); ++u)
            {
                mcs += r.per_ue_mcs[u] ? c.mcs[*r.per_ue_mcs[u]].index : -1;
                snr += r.per_ue_fused_snr_db[u];
                ber += r.per_ue_fused_ber[u];
            }
            const double n = static_cast<double>(r.per_ue_mcs.size());
            const std::string p = std::string(to_string(label)) + "/";
            m.push_back({p + "mcs_index", mcs / n, "ratio"});
            m.push_back({p + "fused_snr", snr / n, "dB"});
            m.push_back({p + "throughput", r.total_throughput_mbps(), "Mbps"});
            m.push_back({p + "fused_ber", ber / n, "ratio"});
            m.push_back({p + "active_rus", static_cast<double>(r.active_rus.size()), "ratio"});
        }
        return m;
    });
}

// Downlink bit rate and spectral efficiency per UE count, Predicted CSI unless overridden.
// Metric names are prefixed `ues=<n>/`.
inline std::vector<ResultRecord> run_mobility_sweep(const ExperimentConfig &c)
{
    const CsiSource csi = c.csi.value_or(CsiSource::Predicted);
    const auto opt = downlink_options(c);
    return run_sweep(c, [&](const Layout &base, const RuSyncSpec &sync_spec, std::uint64_t seed) {
        std::vector<int> counts = c.ue_counts;
        if (c.sweep.variable == SweepVariable::NumUes || counts.empty())
            counts = {base.num_ues};
        std::vector<Metric> m;
        for (int u : counts)
        {
            Layout l = base;
            l.num_ues = u;
            const Scenario s = build_scenario(l, seed);
            const auto r = run_downlink_round(s, make_sync(s, sync_spec), csi, opt);
            const std::string p = "ues=" + std::to_string(u) + "/";
            const double se = r.sum_end_to_end_bpshz();
            m.push_back({p + "spectral_efficiency", se, "bps/Hz"});
            m.push_back({p + "bit_rate", se * s.ofdm.bandwidth_hz() * c.overhead / 1e6, "Mbps"});
            m.push_back({p + "phase2_spectral_efficiency", r.sum_phase2_bpshz(), "bps/Hz"});
        }
        return m;
    });
}

struct RcBenchResult
{
    double nmse_predictor_db = 0.0;
    double nmse_persistence_db = 0.0;
};

inline double nmse_db(std::span<const cplx> predicted, std::span<const cplx> truth)
{
    if (predicted.size() != truth.size() || truth.empty())
        throw std::invalid_argument("NMSE needs two equally long, non-empty sequences.");
    double err = 0.0, power = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i)
    {
        err += std::norm(predicted[i] - truth[i]);
        power += std::norm(truth[i]);
    }
    return linear_to_db(err / power);
}

// One-step prediction of a unit-power Jakes process sampled at f_d * dt = `fd_dt`.
inline RcBenchResult rc_bench_trial(std::uint64_t seed, double fd_dt, const RcConfig &cfg = {},
                                    std::size_t train = 2000, std::size_t test = 500)
{
    Rng rng(derive_seed(seed, {tag(StreamTag::link_fading)}));
    const SumOfSinusoidsFading sos(1, 1, 1, fd_dt, 1.0, 16, rng);
    std::vector<cplx> x(train + test);
    for (std::size_t n = 0; n < x.size(); ++n)
        x[n] = sos.at(static_cast<double>(n))[0](0, 0);
    ChannelPredictor p(cfg, derive_seed(seed, {tag(StreamTag::reservoir)}));
    p.fit(std::vector<std::vector<cplx>>{std::vector<cplx>(x.begin(), x.begin() + train)});
    const auto pred = p.predict_stream(x, train);
    const std::span<const cplx> truth(x.data() + train, test - 1);
    const std::span<const cplx> held(x.data() + train - 1, test - 1);
    return {nmse_db(std::span<const cplx>(pred.data(), test - 1), truth), nmse_db(held, truth)};
}

// Predictor benchmark per f_d * dt sweep value (config values are reused as f_d * dt).
inline std::vector<ResultRecord> run_rc_bench(const std::vector<double> &fd_dt, int trials, std::uint64_t seed_root,
                                              int threads = 1, const RcConfig &cfg = {})
{
    std::vector<RcBenchResult> slots(fd_dt.size() * trials);
    parallel_for(slots.size(), threads, [&](std::size_t i) {
        slots[i] = rc_bench_trial(trial_seed(seed_root, static_cast<int>(i % trials)), fd_dt[i / trials], cfg);
    });
    std::vector<ResultRecord> out;
    for (std::size_t v = 0; v < fd_dt.size(); ++v)
    {
        const std::string sv = shortest_double(fd_dt[v]);
        std::vector<double> a, b;
        int wins = 0;
        for (int t = 0; t < trials; ++t)
        {
            const auto &r = slots[v * trials + t];
            const std::uint64_t seed = trial_seed(seed_root, t);
            out.push_back({sv, seed, "nmse_predictor", r.nmse_predictor_db, "dB"});
            out.push_back({sv, seed, "nmse_persistence", r.nmse_persistence_db, "dB"});
            a.push_back(r.nmse_predictor_db);
            b.push_back(r.nmse_persistence_db);
            wins += r.nmse_predictor_db < r.nmse_persistence_db;
        }
        const auto sa = summarize(a), sb = summarize(b);
        out.push_back({sv, seed_root, "nmse_predictor/mean", sa.mean, "dB"});
        out.push_back({sv, seed_root, "nmse_predictor/ci95_half", sa.ci95_half, "dB"});
        out.push_back({sv, seed_root, "nmse_persistence/mean", sb.mean, "dB"});
        out.push_back({sv, seed_root, "nmse_persistence/ci95_half", sb.ci95_half, "dB"});
        out.push_back({sv, seed_root, "win_fraction", static_cast<double>(wins) / trials, "ratio"});
    }
    return out;
}

// ---------- Emission ----------

struct Manifest
{
    std::string config_hash;
    std::uint64_t seed_root = 1;
    std::string version = version_string;
    nlohmann::json extra = nlohmann::json::object(); // echoed run parameters
};

inline nlohmann::json to_json(const Manifest &m)
{
    nlohmann::json j = m.extra;
    j["config_hash"] = m.config_hash;
    j["seed_root"] = m.seed_root;
    j["version"] = m.version;
    return j;
}

// Manifest echo of the config, including the speeds of the named mobility profiles.
inline Manifest make_manifest(const ExperimentConfig &c, const std::string &study)
{
    Manifest m;
    m.config_hash = config_hash(c);
    m.seed_root = c.seed_root;
    m.extra["study"] = study;
    m.extra["trials"] = c.trials;
    m.extra["sweep_variable"] = std::string(to_string(c.sweep.variable));
    m.extra["sweep_values"] = c.sweep.values;
    nlohmann::json mob = nlohmann::json::object();
    for (auto l : {MobilityLabel::Low, MobilityLabel::Medium, MobilityLabel::High})
    {
        const auto p = MobilityProfile::named(l);
        mob[std::string(to_string(l))] = {{"gnb_speed_kmh", p.gnb_speed_kmh},
                                          {"ue_relative_speed_kmh", p.ue_relative_speed_kmh}};
    }
    m.extra["mobility_profiles"] = mob;
    return m;
}

inline std::string manifest_path_for_csv(const std::string &csv_path) { return csv_path + ".manifest.json"; }

inline void check_record(const ResultRecord &r)
{
    if (!std::isfinite(r.metric_value))
        throw std::invalid_argument("metric '" + r.metric_name + "' is not finite");
    if (!allowed_units().count(r.units))
        throw std::invalid_argument("unit '" + r.units + "' of metric '" + r.metric_name + "' is not allowed");
}

inline std::string to_csv(const std::vector<ResultRecord> &records)
{
    std::string out = "sweep_value,seed,metric_name,metric_value,units\n";
    for (const auto &r : records)
    {
        check_record(r);
        out += r.sweep_value + ',' + std::to_string(r.seed) + ',' + r.metric_name + ',' +
               format_double(r.metric_value) + ',' + r.units + '\n';
    }
    return out;
}

inline nlohmann::json to_json(const std::vector<ResultRecord> &records, const Manifest &m)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto &r : records)
    {
        check_record(r);
        arr.push_back({{"sweep_value", r.sweep_value},
                       {"seed", r.seed},
                       {"metric_name", r.metric_name},
                       {"metric_value", r.metric_value},
                       {"units", r.units}});
    }
    return {{"manifest", to_json(m)}, {"records", arr}};
}

inline std::vector<ResultRecord> parse_csv_records(const std::string &text)
{
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::vector<ResultRecord> out;
    while (std::getline(in, line))
    {
        std::vector<std::string> f;
        boost::split(f, line, boost::is_any_of(","));
        if (f.size() != 5)
            throw std::invalid_argument("malformed CSV record: " + line);
        out.push_back({f[0], std::stoull(f[1]), f[2], std::strtod(f[3].c_str(), nullptr), f[4]});
    }
    return out;
}

inline std::vector<ResultRecord> parse_json_records(const nlohmann::json &j)
{
    std::vector<ResultRecord> out;
    for (const auto &r : j.at("records"))
        out.push_back({r.at("sweep_value").get<std::string>(), r.at("seed").get<std::uint64_t>(),
                       r.at("metric_name").get<std::string>(), r.at("metric_value").get<double>(),
                       r.at("units").get<std::string>()});
    return out;
}

namespace detail
{
inline std::optional<std::string> existing_hash(const std::string &manifest_holder, bool nested)
{
    std::ifstream in(manifest_holder);
    if (!in)
        return std::nullopt;
    try
    {
        const auto j = nlohmann::json::parse(in);
        const auto &m = nested ? j.at("manifest") : j;
        return m.at("config_hash").get<std::string>();
    }
    catch (const std::exception &)
    {
        return std::nullopt;
    }
}

inline void write_file(const std::string &path, const std::string &text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text) || !out.flush())
        throw std::runtime_error("cannot write '" + path + "'");
}
} // namespace detail

// Writes records (CSV plus a `<path>.manifest.json` sidecar, or one JSON document).
// Returns false and warns on stderr when an earlier output at `path` carried a
// different config hash.
inline bool emit_results(const std::vector<ResultRecord> &records, EmitFormat format, const std::string &path,
                         const Manifest &manifest, std::ostream &warn = std::cerr)
{
    const bool csv = format == EmitFormat::Csv;
    const std::string holder = csv ? manifest_path_for_csv(path) : path;
    bool consistent = true;
    if (auto prev = detail::existing_hash(holder, !csv); prev && *prev != manifest.config_hash)
    {
        warn << "warning: '" << path << "' was produced with config hash " << *prev << ", now "
             << manifest.config_hash << "\n";
        consistent = false;
    }
    if (csv)
    {
        detail::write_file(path, to_csv(records));
        detail::write_file(holder, to_json(manifest).dump(2) + "\n");
    }
    else
        detail::write_file(path, to_json(records, manifest).dump(2) + "\n");
    return consistent;
}

} // namespace mdmimo

#endif
