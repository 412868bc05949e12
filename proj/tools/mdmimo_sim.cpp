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

// Command-line front end for the case studies.

#include "mdmimo/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace mdmimo;

namespace
{
struct CommonFlags
{
    std::string config;
    int trials = 0;
    long long seed = -1;
    std::string out;
    std::string format = "csv";
    std::string csi;
    int threads = 0;
};

void add_common(CLI::App *cmd, CommonFlags &f, bool needs_config)
{
    auto *c = cmd->add_option("--config", f.config, "INI configuration file")->check(CLI::ExistingFile);
    if (needs_config)
        c->required();
    cmd->add_option("--trials", f.trials, "Monte-Carlo trials per sweep value (overrides config)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", f.seed, "Root seed (overrides config)")->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", f.out, "Output path; stdout when omitted");
    cmd->add_option("--format", f.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--csi", f.csi, "CSI source for downlink rounds")
        ->check(CLI::IsMember({"perfect", "stale", "predicted"}));
    cmd->add_option("--threads", f.threads, "Worker threads (default: hardware concurrency)")
        ->check(CLI::PositiveNumber);
}

ExperimentConfig resolve(const CommonFlags &f)
{
    ExperimentConfig c = load_config(f.config);
    if (f.trials > 0)
        c.trials = f.trials;
    if (f.seed >= 0)
        c.seed_root = static_cast<std::uint64_t>(f.seed);
    if (!f.csi.empty())
        c.csi = parse_csi_source(f.csi);
    c.emit_format = parse_emit_format(f.format);
    c.output_path = f.out;
    c.threads = f.threads > 0 ? f.threads : std::max(1u, std::thread::hardware_concurrency());
    if (auto errs = validate(c); !errs.empty())
    {
        for (const auto &e : errs)
            std::cerr << "config '" << f.config << "': " << e << "\n";
        throw std::invalid_argument("invalid configuration");
    }
    return c;
}

void emit(const std::vector<ResultRecord> &records, EmitFormat format, const std::string &out, const Manifest &m)
{
    if (out.empty())
    {
        if (format == EmitFormat::Csv)
            std::cout << to_csv(records);
        else
            std::cout << to_json(records, m).dump(2) << "\n";
        return;
    }
    emit_results(records, format, out, m);
}
} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Monte-Carlo simulator for mobile distributed MIMO networks"};
    app.set_version_flag("--version", version_string);
    app.require_subcommand(1);

    CommonFlags dl, ul, mob, val;
    add_common(app.add_subcommand("downlink", "Virtual-array capacity against the direct link"), dl, true);
    add_common(app.add_subcommand("uplink", "Decode-and-forward uplink over an RU sweep"), ul, true);
    add_common(app.add_subcommand("mobility", "Downlink bit rate across mobility profiles"), mob, true);
    auto *validate_cmd = app.add_subcommand("validate", "Check a configuration file");
    validate_cmd->add_option("--config", val.config, "INI configuration file")->required()->check(CLI::ExistingFile);

    CommonFlags rc;
    rc.trials = 100;
    std::vector<double> fd_dt{0.01};
    auto *rc_cmd = app.add_subcommand("rc-bench", "Channel predictor against persistence on Jakes fading");
    add_common(rc_cmd, rc, false);
    rc_cmd->add_option("--fd-dt", fd_dt, "Normalized Doppler values f_d * dt")->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (app.got_subcommand("downlink"))
        {
            const auto c = resolve(dl);
            emit(run_downlink_case_study(c), c.emit_format, c.output_path, make_manifest(c, "downlink"));
        }
        else if (app.got_subcommand("uplink"))
        {
            const auto c = resolve(ul);
            emit(run_uplink_case_study(c), c.emit_format, c.output_path, make_manifest(c, "uplink"));
        }
        else if (app.got_subcommand("mobility"))
        {
            const auto c = resolve(mob);
            emit(run_mobility_sweep(c), c.emit_format, c.output_path, make_manifest(c, "mobility"));
        }
        else if (app.got_subcommand("rc-bench"))
        {
            const std::uint64_t seed = rc.seed >= 0 ? static_cast<std::uint64_t>(rc.seed) : 1;
            const int threads = rc.threads > 0 ? rc.threads : std::max(1u, std::thread::hardware_concurrency());
            for (double v : fd_dt)
                if (!(v > 0.0 && v < 0.5))
                    throw std::invalid_argument("--fd-dt values must lie in (0, 0.5)");
            const auto records = run_rc_bench(fd_dt, rc.trials, seed, threads);
            Manifest m;
            std::string key = "rc-bench;trials=" + std::to_string(rc.trials);
            for (double v : fd_dt)
                key += ";" + format_double(v);
            m.config_hash = fnv1a_hex(key);
            m.seed_root = seed;
            m.extra["study"] = "rc-bench";
            m.extra["trials"] = rc.trials;
            emit(records, parse_emit_format(rc.format), rc.out, m);
        }
        else if (app.got_subcommand("validate"))
        {
            const auto c = load_config(val.config);
            const auto errs = validate(c);
            for (const auto &e : errs)
                std::cout << e << "\n";
            if (!errs.empty())
                return 1;
            std::cout << "ok " << config_hash(c) << "\n";
        }
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
