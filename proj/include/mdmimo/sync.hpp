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

#ifndef mdmimo_sync_H
#define mdmimo_sync_H

#include "mdmimo/channel.hpp"
#include "mdmimo/mimo.hpp"
#include "mdmimo/network.hpp"
#include "mdmimo/scenario.hpp"

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdmimo
{

// Residual synchronization error of one node relative to the gNB reference.
struct NodeSync
{
    double cfo_hz = 0.0;
    double timing_offset_s = 0.0;
    double phase_offset_rad = 0.0;
};

struct SyncState
{
    std::map<int, NodeSync> nodes; // absent nodes are perfectly synchronized
    double phase_noise_std_rad_per_slot = 0.0;

    NodeSync of(int id) const
    {
        auto it = nodes.find(id);
        return it == nodes.end() ? NodeSync{} : it->second;
    }

    bool ideal() const
    {
        for (const auto &[id, n] : nodes)
            if (n.cfo_hz != 0.0 || n.timing_offset_s != 0.0 || n.phase_offset_rad != 0.0)
                return false;
        return phase_noise_std_rad_per_slot == 0.0;
    }

    static SyncState with_cfo(const std::vector<int> &ids, double cfo_hz)
    {
        SyncState s;
        for (int id : ids)
            s.nodes[id].cfo_hz = cfo_hz;
        return s;
    }
};

inline std::vector<std::string> validate(const SyncState &s, const OfdmConfig &ofdm)
{
    std::vector<std::string> out;
    for (const auto &[id, n] : s.nodes)
    {
        const std::string f = "sync.nodes[" + std::to_string(id) + "]";
        if (!(std::abs(n.timing_offset_s) < ofdm.symbol_duration_s()))
            out.push_back(f + ".timing_offset_s: must be shorter than one OFDM symbol");
        if (!(n.phase_offset_rad > -std::numbers::pi && n.phase_offset_rad <= std::numbers::pi))
            out.push_back(f + ".phase_offset_rad: must be wrapped to (-pi, pi]");
        if (!std::isfinite(n.cfo_hz))
            out.push_back(f + ".cfo_hz: must be finite");
    }
    if (!(s.phase_noise_std_rad_per_slot >= 0.0))
        out.push_back("sync.phase_noise_std_rad_per_slot: must be >= 0");
    return out;
}

namespace detail
{
inline void column_range(const CMatrix &h, Eigen::Index &begin, Eigen::Index &count)
{
    if (count < 0)
        count = h.cols() - begin;
    if (begin < 0 || begin + count > h.cols())
        throw std::out_of_range("Column range outside the channel matrix.");
}
} // namespace detail

// Rotates the node's columns by exp(j 2 pi cfo t).
inline ChannelMatrix apply_cfo(ChannelMatrix h, double cfo_hz, double elapsed_s, Eigen::Index col_begin = 0,
                               Eigen::Index col_count = -1)
{
    detail::column_range(h.entries, col_begin, col_count);
    const double turns = cfo_hz * elapsed_s;
    const cplx rot = std::polar(1.0, two_pi * turns);
    h.entries.middleCols(col_begin, col_count) *= rot;
    return h;
}

inline double max_timing_offset_s(double scs_hz) { return 0.1 / scs_hz; }

// Subcarrier k of the node's columns picks up exp(-j 2 pi k scs offset).
inline std::vector<ChannelMatrix> apply_timing_offset(std::vector<ChannelMatrix> h, double offset_s, double scs_hz,
                                                      Eigen::Index col_begin = 0, Eigen::Index col_count = -1)
{
    if (!(std::abs(offset_s) <= max_timing_offset_s(scs_hz)))
        throw std::invalid_argument("timing offset exceeds CP model");
    for (auto &m : h)
    {
        Eigen::Index b = col_begin, c = col_count;
        detail::column_range(m.entries, b, c);
        const double turns = static_cast<double>(m.subcarrier_index) * scs_hz * offset_s;
        m.entries.middleCols(b, c) *= std::polar(1.0, -two_pi * turns);
    }
    return h;
}

// Random-walk oscillator phase drift, one Gaussian increment per node per call (in node-id order).
inline SyncState evolve_phase_noise(SyncState s, Rng &rng)
{
    if (s.phase_noise_std_rad_per_slot == 0.0)
        return s;
    std::normal_distribution<double> n(0.0, s.phase_noise_std_rad_per_slot);
    for (auto &[id, node] : s.nodes)
        node.phase_offset_rad = wrap_phase(node.phase_offset_rad + n(rng));
    return s;
}

// Inter-carrier interference power (relative to signal) from a residual CFO. Offsets
// below 1% of the subcarrier spacing are absorbed by symbol-level synchronization.
inline double cfo_ici_power(double cfo_hz, const OfdmConfig &ofdm)
{
    const double eps = std::abs(cfo_hz) * ofdm.symbol_duration_s();
    if (eps <= 0.01)
        return 0.0;
    return std::pow(std::numbers::pi * eps, 2) / 3.0;
}

// Transmit-side impairments of every node in the virtual array, accumulated over
// `elapsed_s` since the CSI snapshot, applied to its columns of `h` at one subcarrier.
inline void impair_columns(CMatrix &h, const std::vector<int> &tx_ids, const std::vector<int> &tx_antennas,
                           const SyncState &sync, double elapsed_s, int subcarrier, double scs_hz)
{
    Eigen::Index col = 0;
    for (std::size_t n = 0; n < tx_ids.size(); ++n)
    {
        const NodeSync ns = sync.of(tx_ids[n]);
        if (!(std::abs(ns.timing_offset_s) <= max_timing_offset_s(scs_hz)))
            throw std::invalid_argument("timing offset exceeds CP model");
        const double phase = two_pi * ns.cfo_hz * elapsed_s + ns.phase_offset_rad -
                             two_pi * subcarrier * scs_hz * ns.timing_offset_s;
        if (phase != 0.0)
            h.middleCols(col, tx_antennas[n]) *= std::polar(1.0, phase);
        col += tx_antennas[n];
    }
}

// Transmitting nodes of the coherent virtual array: the gNB first, then RUs in scenario order.
inline std::vector<int> virtual_array_ids(const Scenario &s)
{
    std::vector<int> ids{s.gnb().id};
    for (const auto &r : s.rus())
        ids.push_back(r.id);
    return ids;
}

inline std::vector<int> ue_ids(const Scenario &s)
{
    std::vector<int> ids;
    for (const auto &u : s.ues())
        ids.push_back(u.id);
    return ids;
}

inline std::vector<double> power_budgets_dbm(const Scenario &s, const std::vector<int> &ids)
{
    std::vector<double> p;
    for (int id : ids)
        p.push_back(s.node(id).tx_power_dbm);
    return p;
}

// Phase-2 sum rate (bps/Hz, averaged over subcarrier groups) realized when the ZF
// precoder is built from CSI `csi_age_s` old and the impaired channel is used at
// transmit time. Leakage counts as noise.
inline double coherent_capacity_under_impairment(const Scenario &s, const SyncState &sync, double csi_age_s,
                                                 const ChannelOptions &opt = {})
{
    if (csi_age_s < 0.0)
        throw std::invalid_argument("CSI age cannot be negative.");
    const auto tx = virtual_array_ids(s);
    const auto rx = ue_ids(s);
    const auto grid = make_link_grid(s, tx, rx, opt);
    const auto traj = sample_grid(grid, {0.0, csi_age_s}, opt);
    const auto budgets = power_budgets_dbm(s, tx);
    const double noise_dbm = s.noise_power_dbm();

    double total = 0.0;
    const std::size_t groups = traj.num_groups();
    for (std::size_t g = 0; g < groups; ++g)
    {
        const auto csi = composite_at(traj, grid.tx_antennas, 0, g);
        const auto zf = zf_precoder(csi, budgets, noise_dbm);
        CMatrix h_true = composite_at(traj, grid.tx_antennas, 1, g).stacked();
        const int k = group_center_subcarrier(static_cast<int>(g), s.ofdm.num_subcarriers, static_cast<int>(groups));
        impair_columns(h_true, tx, grid.tx_antennas, sync, csi_age_s, k, s.ofdm.scs_hz);
        for (double sinr : stream_sinr(h_true, zf.precoder, dbm_to_mw(noise_dbm)))
            total += std::log2(1.0 + sinr);
    }
    return total / static_cast<double>(groups);
}

} // namespace mdmimo

#endif
