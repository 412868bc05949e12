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

#ifndef mdmimo_link_adaptation_H
#define mdmimo_link_adaptation_H

#include "mdmimo/stbc_sic.hpp"
#include "mdmimo/types.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdmimo
{

struct McsEntry
{
    int index = 0;
    Modulation modulation = Modulation::QPSK;
    double code_rate = 0.5;
    double spectral_eff_bpshz = 1.0;
    double snr_threshold_db = 0.0; // BLER 0.5 point of the logistic curve
};

inline constexpr double default_implementation_gap_db = 2.0;

inline McsEntry make_mcs(int index, Modulation m, double code_rate, double gap_db = default_implementation_gap_db)
{
    const double se = bits_per_symbol(m) * code_rate;
    return {index, m, code_rate, se, 10.0 * std::log10(std::exp2(se) - 1.0) + gap_db};
}

// Eight entries, thresholds at the Shannon SNR of each spectral efficiency plus a gap.
inline std::vector<McsEntry> default_mcs_table(double gap_db = default_implementation_gap_db)
{
    return {
        make_mcs(0, Modulation::QPSK, 0.33, gap_db),  make_mcs(1, Modulation::QPSK, 0.5, gap_db),
        make_mcs(2, Modulation::QPSK, 0.66, gap_db),  make_mcs(3, Modulation::QAM16, 0.5, gap_db),
        make_mcs(4, Modulation::QAM16, 0.66, gap_db), make_mcs(5, Modulation::QAM16, 0.75, gap_db),
        make_mcs(6, Modulation::QAM64, 0.75, gap_db), make_mcs(7, Modulation::QAM64, 0.85, gap_db),
    };
}

inline void check_mcs_table(std::span<const McsEntry> table)
{
    if (table.empty())
        throw std::invalid_argument("MCS table is empty.");
    for (std::size_t i = 0; i < table.size(); ++i)
    {
        const auto &e = table[i];
        if (!(e.code_rate > 0.0 && e.code_rate <= 1.0))
            throw std::invalid_argument("MCS " + std::to_string(e.index) + ": code rate must lie in (0, 1].");
        if (std::abs(e.spectral_eff_bpshz - bits_per_symbol(e.modulation) * e.code_rate) > 1e-12)
            throw std::invalid_argument("MCS " + std::to_string(e.index) + ": spectral efficiency mismatch.");
        if (i > 0 && !(e.spectral_eff_bpshz > table[i - 1].spectral_eff_bpshz &&
                       e.snr_threshold_db > table[i - 1].snr_threshold_db))
            throw std::invalid_argument("MCS table must be strictly increasing in efficiency and threshold.");
    }
}

// CSV with header index,modulation,code_rate,snr_threshold_db.
inline std::vector<McsEntry> load_mcs_csv(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("Cannot open MCS table '" + path + "'.");
    std::vector<McsEntry> table;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line_no == 1)
            continue;
        std::stringstream ss(line);
        std::string idx, mod, rate, thr;
        if (!std::getline(ss, idx, ',') || !std::getline(ss, mod, ',') || !std::getline(ss, rate, ',') ||
            !std::getline(ss, thr, ','))
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 4 columns.");
        try
        {
            McsEntry e;
            e.index = std::stoi(idx);
            e.modulation = parse_modulation(mod);
            e.code_rate = std::stod(rate);
            e.spectral_eff_bpshz = bits_per_symbol(e.modulation) * e.code_rate;
            e.snr_threshold_db = std::stod(thr);
            table.push_back(e);
        }
        catch (const std::exception &ex)
        {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + ex.what());
        }
    }
    check_mcs_table(table);
    return table;
}

// Capacity-equivalent SNR: 2^(mean log2(1 + snr)) - 1, in dB.
inline double effective_snr_db(std::span<const double> per_subcarrier_snr_db)
{
    if (per_subcarrier_snr_db.empty())
        throw std::invalid_argument("Effective SNR needs at least one subcarrier.");
    double acc = 0.0;
    for (double s : per_subcarrier_snr_db)
        acc += std::log2(1.0 + db_to_linear(s));
    return linear_to_db(std::exp2(acc / static_cast<double>(per_subcarrier_snr_db.size())) - 1.0);
}

inline constexpr double bler_slope_db = 0.5;
inline constexpr double bler_floor = 1e-6;

inline double bler(double snr_eff_db, const McsEntry &mcs)
{
    const double b = 1.0 / (1.0 + std::exp((snr_eff_db - mcs.snr_threshold_db) / bler_slope_db));
    return std::clamp(b, bler_floor, 1.0);
}

struct ThroughputReport
{
    std::optional<int> chosen_mcs; // table position, not the entry's index field
    double bler = 1.0;
    double goodput_mbps = 0.0;
};

inline constexpr double default_overhead = 0.86;

// Picks the entry maximizing spectral efficiency x (1 - BLER). Nothing is chosen when
// the best goodput is below 1 kbps.
inline ThroughputReport max_throughput(double snr_eff_db, std::span<const McsEntry> table, double bandwidth_hz,
                                       double overhead = default_overhead)
{
    if (table.empty())
        throw std::invalid_argument("MCS table is empty.");
    if (!(overhead > 0.0 && overhead <= 1.0))
        throw std::invalid_argument("Overhead factor must lie in (0, 1].");

    int best = 0;
    double best_value = -1.0;
    for (std::size_t i = 0; i < table.size(); ++i)
    {
        const double v = table[i].spectral_eff_bpshz * (1.0 - bler(snr_eff_db, table[i]));
        if (v > best_value)
        {
            best_value = v;
            best = static_cast<int>(i);
        }
    }

    ThroughputReport r;
    const double goodput_bps = best_value * bandwidth_hz * overhead;
    if (!(goodput_bps >= 1e3))
        return r;
    r.chosen_mcs = best;
    r.bler = bler(snr_eff_db, table[best]);
    r.goodput_mbps = goodput_bps / 1e6;
    return r;
}

} // namespace mdmimo

#endif
