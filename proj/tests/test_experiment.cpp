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

#include "mdmimo/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mdmimo;
namespace fs = std::filesystem;

namespace
{
const std::string config_dir = MDMIMO_CONFIG_DIR;

fs::path temp_file(const std::string &name, const std::string &body = {})
{
    const auto p = fs::temp_directory_path() / ("mdmimo_test_" + name);
    if (!body.empty())
        std::ofstream(p) << body;
    return p;
}

std::string read_all(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream o;
    o << in.rdbuf();
    return o.str();
}

std::string load_error(const std::string &body)
{
    const auto p = temp_file("bad.ini", body);
    try
    {
        load_config(p.string());
    }
    catch (const std::exception &e)
    {
        return e.what();
    }
    return "";
}

ExperimentConfig small_downlink()
{
    ExperimentConfig c;
    c.layout.num_ues = 1;
    c.layout.ru_anchor = RuAnchor::Ue;
    c.sweep = {SweepVariable::DistanceM, {"100", "1000"}};
    c.ru_counts = {0, 2};
    c.trials = 6;
    return c;
}

double record_value(const std::vector<ResultRecord> &rs, const std::string &sweep, std::uint64_t seed,
                    const std::string &name)
{
    for (const auto &r : rs)
        if (r.sweep_value == sweep && r.seed == seed && r.metric_name == name)
            return r.metric_value;
    ADD_FAILURE() << "missing " << name;
    return std::nan("");
}

std::string run_command(const std::string &cmd, int &status)
{
    std::string out;
    FILE *p = popen(cmd.c_str(), "r");
    if (!p)
    {
        status = -1;
        return out;
    }
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p))
        out.append(buf, n);
    status = pclose(p);
    return out;
}
} // namespace

TEST(Config, ShippedConfigsLoadAndValidate)
{
    for (const char *name : {"downlink.ini", "uplink.ini", "mobility.ini", "cfo.ini"})
    {
        const auto c = load_config(config_dir + "/" + name);
        EXPECT_TRUE(validate(c).empty()) << name;
    }
    const auto d = load_config(config_dir + "/downlink.ini");
    EXPECT_EQ(d.sweep.variable, SweepVariable::DistanceM);
    EXPECT_EQ(d.sweep.values, (std::vector<std::string>{"100", "300", "1000"}));
    EXPECT_EQ(d.ru_counts, (std::vector<int>{2, 4, 8}));
    EXPECT_EQ(d.trials, 200);
    EXPECT_EQ(d.layout.gnb_power_dbm, 33.0);
    EXPECT_EQ(d.layout.ru_anchor, RuAnchor::Ue);
    EXPECT_EQ(d.csi, CsiSource::Perfect);

    const auto m = load_config(config_dir + "/mobility.ini");
    EXPECT_EQ(m.sweep.values, (std::vector<std::string>{"low", "medium", "high"}));
    EXPECT_EQ(m.ue_counts, (std::vector<int>{2, 4, 8}));
}

TEST(Config, KeysAndSections)
{
    const auto p = temp_file("full.ini", "[scenario]\nnum_rus = 3\nue_distance_m = 420\n"
                                         "[ofdm]\nnum_groups = 4\n"
                                         "[mobility]\nprofile = custom\ngnb_speed_kmh = 5\nue_relative_speed_kmh = 0.5\n"
                                         "[sweep]\nvariable = cfo_hz\nvalues = 0, 0.05, 1e2\nseed = 9\n"
                                         "temporal_model = gauss_markov\ncsi_age_s = 0.002\n"
                                         "[sync]\nru_cfo_hz = 20\nphase_noise_std_rad_per_slot = 0.01\n"
                                         "[mcs]\nimplementation_gap_db = 3\noverhead = 0.9\n");
    const auto c = load_config(p.string());
    EXPECT_EQ(c.layout.num_rus, 3);
    EXPECT_EQ(c.layout.ue_distance_m, 420.0);
    EXPECT_EQ(c.channel.num_groups, 4);
    EXPECT_EQ(c.layout.mobility.label, MobilityLabel::Custom);
    EXPECT_EQ(c.layout.mobility.gnb_speed_kmh, 5.0);
    EXPECT_EQ(c.sweep.values, (std::vector<std::string>{"0", "0.05", "100"}));
    EXPECT_EQ(c.seed_root, 9u);
    EXPECT_EQ(c.channel.temporal_model, TemporalModel::GaussMarkov);
    EXPECT_EQ(c.csi_age_s, 0.002);
    EXPECT_EQ(c.sync.cfo_hz, 20.0);
    EXPECT_EQ(c.overhead, 0.9);
    EXPECT_NEAR(c.mcs[0].snr_threshold_db, default_mcs_table(3.0)[0].snr_threshold_db, 1e-15);
    EXPECT_FALSE(c.csi.has_value());
}

TEST(Config, McsTablePathIsRelativeToConfig)
{
    const auto c = load_config(config_dir + "/uplink.ini");
    const auto t = load_mcs_csv(config_dir + "/mcs_table.csv");
    const auto p = temp_file("mcs.ini", "[mcs]\ntable = " + config_dir + "/mcs_table.csv\n");
    const auto d = load_config(p.string());
    ASSERT_EQ(d.mcs.size(), t.size());
    EXPECT_EQ(d.mcs.back().snr_threshold_db, t.back().snr_threshold_db);
    EXPECT_GT(c.mcs.size(), 0u);
}

TEST(Config, ErrorsNameTheFileAndKey)
{
    EXPECT_NE(load_error("[scenario]\nnum_ruz = 2\n").find("scenario.num_ruz"), std::string::npos);
    EXPECT_NE(load_error("[extra]\na = 1\n").find("unknown section [extra]"), std::string::npos);
    EXPECT_NE(load_error("[scenario]\nru_anchor = moon\n").find("ru_anchor"), std::string::npos);
    EXPECT_NE(load_error("[mobility]\nprofile = custom\n").find("custom mobility"), std::string::npos);
    EXPECT_NE(load_error("[mobility]\nprofile = high\ngnb_speed_kmh = 3\n").find("profile = custom"),
              std::string::npos);
    EXPECT_NE(load_error("[scenario]\nnum_rus = two\n").find("num_rus"), std::string::npos);
    EXPECT_NE(load_error("[sweep]\ncsi = oracle\n").find("oracle"), std::string::npos);
    const std::string e = load_error("[sweep]\nvariable = weather\n");
    EXPECT_EQ(e.rfind("config '", 0), 0u) << e;
    EXPECT_THROW(load_config("/nonexistent/x.ini"), std::runtime_error);
}

TEST(Config, SweepValuesAreTypeChecked)
{
    ExperimentConfig c;
    c.sweep = {SweepVariable::NumRus, {"0", "2.5", "-1", "x"}};
    auto errs = validate(c);
    ASSERT_EQ(errs.size(), 3u);
    EXPECT_EQ(errs[0], "sweep.values: '2.5' is not valid for num_rus");

    c.sweep = {SweepVariable::Mobility, {"low", "warp"}};
    errs = validate(c);
    ASSERT_EQ(errs.size(), 1u);
    EXPECT_EQ(errs[0], "sweep.values: 'warp' is not valid for mobility");

    c.sweep = {SweepVariable::DistanceM, {}};
    c.trials = 0;
    errs = validate(c);
    EXPECT_NE(std::find(errs.begin(), errs.end(), "sweep.values: must not be empty"), errs.end());
    EXPECT_NE(std::find(errs.begin(), errs.end(), "sweep.trials: must be a positive integer"), errs.end());

    c = ExperimentConfig{};
    c.sweep = {SweepVariable::DistanceM, {"100"}};
    c.layout.gnb_antennas = 0;
    errs = validate(c);
    ASSERT_FALSE(errs.empty());
    EXPECT_EQ(errs[0].rfind("scenario: ", 0), 0u);
}

TEST(Config, HashTracksResultRelevantFields)
{
    const auto a = load_config(config_dir + "/downlink.ini");
    auto b = a;
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
    b.threads = 8;
    b.output_path = "elsewhere.csv";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.trials = 3;
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Stats, SummaryAndParallelFor)
{
    const std::vector<double> v{1.0, 2.0, 3.0};
    const auto s = summarize(v);
    EXPECT_DOUBLE_EQ(s.mean, 2.0);
    EXPECT_NEAR(s.ci95_half, 1.959963984540054 / std::sqrt(3.0), 1e-15);
    EXPECT_EQ(summarize(std::vector<double>{4.0}).ci95_half, 0.0);

    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
    EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 1000);
    EXPECT_THROW(parallel_for(10, 3,
                              [](std::size_t i) {
                                  if (i == 7)
                                      throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
}

TEST(Emit, CsvShapes)
{
    EXPECT_EQ(to_csv({}), "sweep_value,seed,metric_name,metric_value,units\n");
    const std::string one = to_csv({{"100", 7, "x", 0.1, "dB"}});
    EXPECT_EQ(one, "sweep_value,seed,metric_name,metric_value,units\n100,7,x,0.10000000000000001,dB\n");
    EXPECT_EQ(std::count(one.begin(), one.end(), '\n'), 2);
    EXPECT_THROW(to_csv({{"1", 1, "x", std::nan(""), "dB"}}), std::invalid_argument);
    EXPECT_THROW(to_csv({{"1", 1, "x", 1.0, "furlongs"}}), std::invalid_argument);
}

TEST(Emit, CsvAndJsonRoundTripExactly)
{
    Rng rng(601);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    std::vector<ResultRecord> rs{{"0.05", 1, "a", 1.0 / 3.0, "ratio"},
                                 {"low", 18446744073709551615ull, "b/mean", 1e-300, "Mbps"},
                                 {"1000", 2, "c", -0.0, "bps/Hz"},
                                 {"1000", 2, "d", 5e307, "dB"}};
    for (int i = 0; i < 200; ++i)
        rs.push_back({std::to_string(i), static_cast<std::uint64_t>(i), "r", u(rng) * std::exp(u(rng) / 1e5), "dB"});
    const auto from_csv = parse_csv_records(to_csv(rs));
    const auto from_json = parse_json_records(nlohmann::json::parse(to_json(rs, Manifest{}).dump()));
    ASSERT_EQ(from_csv.size(), rs.size());
    EXPECT_EQ(from_csv, rs);
    EXPECT_EQ(from_json, rs);
    EXPECT_EQ(from_csv, from_json);
}

TEST(Emit, ManifestSidecarAndHashMismatchWarning)
{
    const auto path = temp_file("out.csv").string();
    fs::remove(path);
    fs::remove(manifest_path_for_csv(path));
    Manifest m;
    m.config_hash = "0123456789abcdef";
    std::ostringstream warn;
    EXPECT_TRUE(emit_results({{"1", 1, "x", 2.0, "dB"}}, EmitFormat::Csv, path, m, warn));
    EXPECT_TRUE(warn.str().empty());
    const auto side = nlohmann::json::parse(read_all(manifest_path_for_csv(path)));
    EXPECT_EQ(side.at("config_hash"), "0123456789abcdef");
    EXPECT_EQ(side.at("version"), version_string);
    EXPECT_TRUE(emit_results({}, EmitFormat::Csv, path, m, warn));

    m.config_hash = "fedcba9876543210";
    EXPECT_FALSE(emit_results({}, EmitFormat::Csv, path, m, warn));
    EXPECT_NE(warn.str().find("0123456789abcdef"), std::string::npos);

    const auto jpath = temp_file("out.json").string();
    fs::remove(jpath);
    EXPECT_TRUE(emit_results({{"1", 1, "x", 2.0, "dB"}}, EmitFormat::Json, jpath, m, warn));
    m.config_hash = "0000000000000000";
    std::ostringstream w2;
    EXPECT_FALSE(emit_results({}, EmitFormat::Json, jpath, m, w2));
    EXPECT_FALSE(w2.str().empty());

    try
    {
        emit_results({}, EmitFormat::Json, "/nonexistent/dir/out.json", m, w2);
        FAIL();
    }
    catch (const std::runtime_error &e)
    {
        EXPECT_STREQ(e.what(), "cannot write '/nonexistent/dir/out.json'");
    }
}

TEST(Emit, ManifestEchoesMobilitySpeeds)
{
    const auto j = to_json(make_manifest(load_config(config_dir + "/mobility.ini"), "mobility"));
    EXPECT_EQ(j.at("mobility_profiles").at("low").at("gnb_speed_kmh"), 0.1);
    EXPECT_EQ(j.at("mobility_profiles").at("medium").at("gnb_speed_kmh"), 3.0);
    EXPECT_EQ(j.at("mobility_profiles").at("high").at("gnb_speed_kmh"), 10.0);
    EXPECT_EQ(j.at("study"), "mobility");
    EXPECT_EQ(j.at("seed_root"), 1);
}

TEST(Studies, DownlinkZeroRusGainIsOne)
{
    const auto c = small_downlink();
    const auto rs = run_downlink_case_study(c);
    int n = 0;
    for (const auto &r : rs)
        if (r.metric_name == "rus=0/relative_gain")
        {
            EXPECT_EQ(r.metric_value, 1.0);
            ++n;
        }
    EXPECT_EQ(n, 2 * 6);
    for (const auto &r : rs)
        if (r.metric_name == "rus=0/relative_gain/ci95_half")
        {
            EXPECT_EQ(r.metric_value, 0.0);
        }
}

TEST(Studies, SummaryRowsMatchTrials)
{
    const auto c = small_downlink();
    const auto rs = run_downlink_case_study(c);
    std::vector<double> vals;
    for (const auto &r : rs)
        if (r.sweep_value == "1000" && r.metric_name == "rus=2/virtual_array_capacity")
            vals.push_back(r.metric_value);
    ASSERT_EQ(vals.size(), 6u);
    const auto s = summarize(vals);
    EXPECT_EQ(record_value(rs, "1000", c.seed_root, "rus=2/virtual_array_capacity/mean"), s.mean);
    EXPECT_EQ(record_value(rs, "1000", c.seed_root, "rus=2/virtual_array_capacity/ci95_half"), s.ci95_half);
    for (const auto &r : rs)
        EXPECT_TRUE(allowed_units().count(r.units));
}

TEST(Studies, ByteIdenticalAcrossThreadCountsAndRuns)
{
    auto c = small_downlink();
    c.trials = 4;
    c.threads = 1;
    const std::string one = to_csv(run_downlink_case_study(c));
    c.threads = 4;
    const std::string four = to_csv(run_downlink_case_study(c));
    EXPECT_EQ(one, four);
    EXPECT_EQ(one, to_csv(run_downlink_case_study(c)));

    c.trials = 1;
    EXPECT_EQ(to_csv(run_downlink_case_study(c)), to_csv(run_downlink_case_study(c)));

    const auto a = run_rc_bench({0.01, 0.05}, 3, 5, 1), b = run_rc_bench({0.01, 0.05}, 3, 5, 3);
    EXPECT_EQ(to_csv(a), to_csv(b));
}

TEST(Studies, UplinkWithoutRusEqualsDirectRound)
{
    ExperimentConfig c;
    c.sweep = {SweepVariable::NumRus, {"0"}};
    c.trials = 3;
    const auto rs = run_uplink_case_study(c);
    for (int t = 0; t < 3; ++t)
    {
        const auto seed = trial_seed(c.seed_root, t);
        Layout l = c.layout;
        l.num_rus = 0;
        l.mobility = MobilityProfile::named(MobilityLabel::High);
        const auto direct = run_uplink_round(build_scenario(l, seed), c.mcs);
        EXPECT_EQ(record_value(rs, "0", seed, "high/throughput"), direct.total_throughput_mbps());
        EXPECT_EQ(record_value(rs, "0", seed, "high/active_rus"), 0.0);
    }
}

TEST(Studies, MobilitySweepMetrics)
{
    ExperimentConfig c;
    c.sweep = {SweepVariable::Mobility, {"high"}};
    c.ue_counts = {2};
    c.trials = 2;
    c.csi = CsiSource::Stale;
    const auto rs = run_mobility_sweep(c);
    const auto seed = trial_seed(c.seed_root, 0);
    const double se = record_value(rs, "high", seed, "ues=2/spectral_efficiency");
    EXPECT_GT(se, 0.0);
    EXPECT_NEAR(record_value(rs, "high", seed, "ues=2/bit_rate"), se * 7.68 * c.overhead, 1e-9);
    EXPECT_GE(record_value(rs, "high", seed, "ues=2/phase2_spectral_efficiency"), se);
}

TEST(Studies, SweepValueAppliesToLayoutAndSync)
{
    Layout l;
    RuSyncSpec s;
    apply_sweep_value(SweepVariable::CfoHz, "50", l, s);
    EXPECT_EQ(s.cfo_hz, 50.0);
    apply_sweep_value(SweepVariable::Mobility, "medium", l, s);
    EXPECT_EQ(l.mobility.gnb_speed_kmh, 3.0);
    apply_sweep_value(SweepVariable::NumUes, "8", l, s);
    EXPECT_EQ(l.num_ues, 8);

    const Scenario sc = build_scenario(l, 1);
    const auto sync = make_sync(sc, s);
    EXPECT_EQ(sync.nodes.size(), sc.rus().size());
    EXPECT_EQ(sync.of(0).cfo_hz, 0.0);
    EXPECT_EQ(sync.of(Layout::ru_id_base).cfo_hz, 50.0);
}

TEST(Cli, VersionValidateAndRun)
{
    const std::string exe = MDMIMO_SIM_EXE;
    int status = 0;
    EXPECT_NE(run_command(exe + " --version", status).find(version_string), std::string::npos);
    EXPECT_EQ(status, 0);

    const std::string cfg = config_dir + "/downlink.ini";
    const std::string ok = run_command(exe + " validate --config " + cfg, status);
    EXPECT_EQ(status, 0);
    EXPECT_EQ(ok, "ok " + config_hash(load_config(cfg)) + "\n");

    const auto bad = temp_file("cli_bad.ini", "[sweep]\nvalues = 1, -5\n");
    run_command(exe + " validate --config " + bad.string() + " 2>&1", status);
    EXPECT_NE(status, 0);

    const auto out = temp_file("cli_out.csv");
    fs::remove(out);
    fs::remove(manifest_path_for_csv(out.string()));
    run_command(exe + " downlink --config " + cfg + " --trials 2 --threads 2 --out " + out.string(), status);
    EXPECT_EQ(status, 0);
    const std::string text = read_all(out);
    EXPECT_EQ(text.rfind("sweep_value,seed,metric_name,metric_value,units\n", 0), 0u);
    EXPECT_TRUE(fs::exists(manifest_path_for_csv(out.string())));

    auto c = load_config(cfg);
    c.trials = 2;
    EXPECT_EQ(text, to_csv(run_downlink_case_study(c)));

    const std::string json = run_command(exe + " rc-bench --trials 2 --fd-dt 0.01 --format json", status);
    EXPECT_EQ(status, 0);
    const auto j = nlohmann::json::parse(json);
    EXPECT_EQ(j.at("records").size(), 2u * 2u + 5u);
}
