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

#ifndef mdmimo_protocol_H
#define mdmimo_protocol_H

#include "mdmimo/channel.hpp"
#include "mdmimo/link_adaptation.hpp"
#include "mdmimo/mimo.hpp"
#include "mdmimo/network.hpp"
#include "mdmimo/rc_predictor.hpp"
#include "mdmimo/scenario.hpp"
#include "mdmimo/stbc_sic.hpp"
#include "mdmimo/sync.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace mdmimo
{

enum class CsiSource
{
    Perfect,
    Stale,
    Predicted
};

inline std::string_view to_string(CsiSource c)
{
    switch (c)
    {
    case CsiSource::Perfect:
        return "perfect";
    case CsiSource::Stale:
        return "stale";
    case CsiSource::Predicted:
        return "predicted";
    }
    return "?";
}

inline CsiSource parse_csi_source(std::string_view s)
{
    if (s == "perfect")
        return CsiSource::Perfect;
    if (s == "stale")
        return CsiSource::Stale;
    if (s == "predicted")
        return CsiSource::Predicted;
    throw std::invalid_argument("Unknown CSI source '" + std::string(s) + "'.");
}

enum class CascadeRule
{
    OptimalSplit, // phase durations chosen so both hops finish together
    FixedHalf     // each phase gets half of the time
};

// End-to-end rate of the broadcast + joint-transmission cascade for one UE when
// `num_ues` UEs share the phase-1 payload.
inline double cascade_rate(double phase1_bpshz, double phase2_bpshz, int num_ues,
                           CascadeRule rule = CascadeRule::OptimalSplit)
{
    if (num_ues < 1)
        throw std::invalid_argument("At least one UE shares the broadcast payload.");
    if (phase1_bpshz <= 0.0 || phase2_bpshz <= 0.0)
        return 0.0;
    if (rule == CascadeRule::FixedHalf)
        return std::min(0.5 * phase1_bpshz / num_ues, 0.5 * phase2_bpshz);
    return phase1_bpshz * phase2_bpshz / (phase1_bpshz + num_ues * phase2_bpshz);
}

struct DownlinkOptions
{
    double csi_age_s = -1.0;    // negative: one slot
    int history_samples = 64;   // CSI snapshots the predictor trains on
    int max_training_sequences = 32;
    CascadeRule cascade = CascadeRule::OptimalSplit;
    RcConfig rc;
    ChannelOptions channel;
};

struct DownlinkRound
{
    int num_rus = 0;
    double phase1_rate_bpshz = 0.0; // worst gNB->RU link; 0 when there are no RUs
    std::vector<double> phase2_rates_bpshz;
    double time_split = 0.0; // fraction of time spent broadcasting in phase 1
    std::vector<double> end_to_end_rates_bpshz;
    std::vector<std::vector<double>> per_ue_stream_sinr_db; // every stream on every subcarrier group
    bool zf_infeasible = false;

    double sum_phase2_bpshz() const
    {
        return std::accumulate(phase2_rates_bpshz.begin(), phase2_rates_bpshz.end(), 0.0);
    }
    double sum_end_to_end_bpshz() const
    {
        return std::accumulate(end_to_end_rates_bpshz.begin(), end_to_end_rates_bpshz.end(), 0.0);
    }
};

namespace detail
{
inline double csi_age_or_slot(double age, const OfdmConfig &ofdm) { return age < 0.0 ? ofdm.slot_duration_s() : age; }

// Eigenmode SNRs of open-loop equal-power transmission over one direct link.
inline std::vector<double> eigenmode_snr_db(const CMatrix &h, double tx_power_dbm, double noise_dbm)
{
    const double per_antenna = dbm_to_mw(tx_power_dbm) / (static_cast<double>(h.cols()) * dbm_to_mw(noise_dbm));
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(CMatrix(h * h.adjoint()), Eigen::EigenvaluesOnly);
    std::vector<double> out;
    const Eigen::Index modes = std::min(h.rows(), h.cols());
    for (Eigen::Index i = 0; i < modes; ++i)
        out.push_back(linear_to_db(per_antenna * std::max(eig.eigenvalues()(h.rows() - 1 - i), 0.0)));
    return out;
}

// Replaces the CSI snapshot of every link with an RC prediction `steps` ahead. One
// readout per UE, trained on the CSI history of all its links.
inline void predict_csi(GridTrajectory &traj, std::size_t last_history, std::size_t csi_slot, int steps,
                        const DownlinkOptions &opt, const Reservoir &reservoir)
{
    const std::size_t groups = traj.num_groups();
    for (std::size_t rx = 0; rx < traj.n_rx; ++rx)
    {
        std::vector<std::vector<cplx>> sequences;
        std::vector<std::tuple<std::size_t, std::size_t, Eigen::Index, Eigen::Index>> where;
        for (std::size_t tx = 0; tx < traj.n_tx; ++tx)
        {
            const auto &first = traj.at(rx, tx, 0)[0];
            for (std::size_t g = 0; g < groups; ++g)
                for (Eigen::Index c = 0; c < first.cols(); ++c)
                    for (Eigen::Index r = 0; r < first.rows(); ++r)
                    {
                        std::vector<cplx> seq(last_history + 1);
                        for (std::size_t t = 0; t <= last_history; ++t)
                            seq[t] = traj.at(rx, tx, t)[g](r, c);
                        sequences.push_back(std::move(seq));
                        where.emplace_back(tx, g, r, c);
                    }
        }
        // Evenly strided subset keeps readout training cost bounded.
        std::vector<std::vector<cplx>> training;
        const std::size_t cap = std::max<std::size_t>(1, opt.max_training_sequences);
        const std::size_t stride = std::max<std::size_t>(1, sequences.size() / cap);
        for (std::size_t i = 0; i < sequences.size() && training.size() < cap; i += stride)
            training.push_back(sequences[i]);

        ChannelPredictor predictor(opt.rc, reservoir);
        predictor.fit(training);
        const auto predicted = predictor.predict(sequences, steps);
        for (std::size_t i = 0; i < where.size(); ++i)
        {
            const auto [tx, g, r, c] = where[i];
            traj.at(rx, tx, csi_slot)[g](r, c) = predicted[i];
        }
    }
}
} // namespace detail

// Two-phase coherent downlink: the gNB broadcasts the payload of every UE to the RUs,
// then gNB and RUs jointly ZF-precode to the UEs from the chosen CSI.
inline DownlinkRound run_downlink_round(const Scenario &s, const SyncState &sync, CsiSource csi,
                                        const DownlinkOptions &opt = {})
{
    const auto tx = virtual_array_ids(s);
    const auto rx = ue_ids(s);
    if (rx.empty())
        throw std::invalid_argument("Downlink round needs at least one UE.");
    const int num_rus = static_cast<int>(tx.size()) - 1;
    const int num_ues = static_cast<int>(rx.size());
    const double noise_dbm = s.noise_power_dbm();
    const double age = detail::csi_age_or_slot(opt.csi_age_s, s.ofdm);

    DownlinkRound round;
    round.num_rus = num_rus;
    round.phase2_rates_bpshz.assign(num_ues, 0.0);
    round.per_ue_stream_sinr_db.assign(num_ues, {});

    // Sampling grid: CSI history at spacing dt ending `age` before transmission.
    const int steps = age > 0.0 ? std::max(1, static_cast<int>(std::lround(age / s.ofdm.slot_duration_s()))) : 1;
    const double dt = age > 0.0 ? age / steps : s.ofdm.slot_duration_s();
    // The transmit instant is fixed across CSI modes so they share one realization.
    const int hist = std::max(opt.history_samples, 8);
    const double t_csi = (hist - 1) * dt;
    std::vector<double> times;
    if (csi == CsiSource::Predicted && age > 0.0)
        for (int i = 0; i < hist; ++i)
            times.push_back(i * dt);
    else
        times.push_back(t_csi);
    times.push_back(t_csi + age);
    const std::size_t tx_slot = times.size() - 1;
    const std::size_t last_history = times.size() - 2;

    const auto grid = make_link_grid(s, tx, rx, opt.channel);
    auto traj = sample_grid(grid, times, opt.channel);
    const std::size_t groups = traj.num_groups();

    std::size_t csi_slot = last_history;
    if (csi == CsiSource::Perfect || age == 0.0)
        csi_slot = tx_slot;
    else if (csi == CsiSource::Predicted)
    {
        const Reservoir reservoir =
            init_reservoir(opt.rc.size, opt.rc.spectral_radius, 2, opt.rc.leak_rate,
                           derive_seed(s.seed, {tag(StreamTag::reservoir)}), opt.rc.density);
        // Predictions overwrite the last history snapshot, which then serves as CSI.
        detail::predict_csi(traj, last_history, last_history, steps, opt, reservoir);
    }

    if (num_rus == 0 && num_ues == 1)
    {
        // Degenerate virtual array: open-loop direct link, no CSI at the transmitter.
        const double p = s.gnb().tx_power_dbm;
        double c = 0.0;
        for (std::size_t g = 0; g < groups; ++g)
        {
            const auto &h = traj.at(0, 0, tx_slot)[g];
            c += baseline_capacity_bpshz(h, p, noise_dbm);
            for (double v : detail::eigenmode_snr_db(h, p, noise_dbm))
                round.per_ue_stream_sinr_db[0].push_back(v);
        }
        round.phase2_rates_bpshz[0] = c / static_cast<double>(groups);
        round.end_to_end_rates_bpshz = round.phase2_rates_bpshz;
        return round;
    }

    const auto budgets = power_budgets_dbm(s, tx);
    for (std::size_t g = 0; g < groups; ++g)
    {
        const auto csi_h = composite_at(traj, grid.tx_antennas, csi_slot, g);
        PrecodingResult zf;
        try
        {
            zf = zf_precoder(csi_h, budgets, noise_dbm);
        }
        catch (const ZfInfeasible &)
        {
            round.zf_infeasible = true;
            round.phase2_rates_bpshz.assign(num_ues, 0.0);
            round.end_to_end_rates_bpshz.assign(num_ues, 0.0);
            round.per_ue_stream_sinr_db.assign(num_ues, {});
            return round;
        }
        CMatrix h_true = composite_at(traj, grid.tx_antennas, tx_slot, g).stacked();
        const int k = group_center_subcarrier(static_cast<int>(g), s.ofdm.num_subcarriers, static_cast<int>(groups));
        impair_columns(h_true, tx, grid.tx_antennas, sync, age, k, s.ofdm.scs_hz);
        const auto sinr = stream_sinr(h_true, zf.precoder, dbm_to_mw(noise_dbm));
        const auto owner = csi_h.stream_owner();
        for (std::size_t st = 0; st < sinr.size(); ++st)
        {
            round.phase2_rates_bpshz[owner[st]] += std::log2(1.0 + sinr[st]);
            round.per_ue_stream_sinr_db[owner[st]].push_back(linear_to_db(sinr[st]));
        }
    }
    for (auto &r : round.phase2_rates_bpshz)
        r /= static_cast<double>(groups);

    if (num_rus == 0)
    {
        round.end_to_end_rates_bpshz = round.phase2_rates_bpshz;
        return round;
    }

    // Phase 1: open-loop broadcast, limited by the weakest RU.
    const std::vector<int> gnb{s.gnb().id};
    const std::vector<int> rus(tx.begin() + 1, tx.end());
    const auto fh = make_link_grid(s, gnb, rus, opt.channel);
    const auto fh_traj = sample_grid(fh, {times.back()}, opt.channel);
    double r1 = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < rus.size(); ++r)
    {
        double c = 0.0;
        for (std::size_t g = 0; g < groups; ++g)
            c += baseline_capacity_bpshz(fh_traj.at(r, 0, 0)[g], s.gnb().tx_power_dbm, noise_dbm);
        r1 = std::min(r1, c / static_cast<double>(groups));
    }
    round.phase1_rate_bpshz = r1;

    round.end_to_end_rates_bpshz.resize(num_ues);
    for (int u = 0; u < num_ues; ++u)
        round.end_to_end_rates_bpshz[u] = cascade_rate(r1, round.phase2_rates_bpshz[u], num_ues, opt.cascade);
    const double mean_r2 = round.sum_phase2_bpshz() / num_ues;
    round.time_split = (r1 > 0.0 && mean_r2 > 0.0) ? num_ues * mean_r2 / (r1 + num_ues * mean_r2) : 0.0;
    if (opt.cascade == CascadeRule::FixedHalf)
        round.time_split = 0.5;
    return round;
}

// ---------- RU selection ----------

enum class SelectionObjective
{
    MaxEndToEnd
};

// Copy of the scenario keeping the gNB, the UEs and only the listed RUs.
inline Scenario with_rus(const Scenario &s, const std::vector<int> &ru_ids)
{
    Scenario out = s;
    out.nodes.clear();
    for (const auto &n : s.nodes)
        if (n.kind != NodeKind::Ru || std::find(ru_ids.begin(), ru_ids.end(), n.id) != ru_ids.end())
            out.nodes.push_back(n);
    return out;
}

// RU ids ordered by decreasing gNB->RU open-loop capacity (ties by id).
inline std::vector<int> rank_rus_by_fronthaul(const Scenario &s, const ChannelOptions &opt = {})
{
    std::vector<int> rus;
    for (const auto &r : s.rus())
        rus.push_back(r.id);
    if (rus.empty())
        return rus;
    const auto grid = make_link_grid(s, {s.gnb().id}, rus, opt);
    const auto traj = sample_grid(grid, {0.0}, opt);
    std::vector<std::pair<double, int>> rated;
    for (std::size_t r = 0; r < rus.size(); ++r)
    {
        double c = 0.0;
        for (const auto &h : traj.at(r, 0, 0))
            c += baseline_capacity_bpshz(h, s.gnb().tx_power_dbm, s.noise_power_dbm());
        rated.emplace_back(c, rus[r]);
    }
    std::stable_sort(rated.begin(), rated.end(), [](auto &a, auto &b) { return a.first > b.first; });
    std::vector<int> out;
    for (auto &[c, id] : rated)
        out.push_back(id);
    return out;
}

inline double end_to_end_sum(const Scenario &s, const std::vector<int> &ru_ids, const DownlinkOptions &opt)
{
    return run_downlink_round(with_rus(s, ru_ids), SyncState{}, CsiSource::Perfect, opt).sum_end_to_end_bpshz();
}

// Greedy prefix sweep over the rate-ordered candidates; returns the best prefix.
inline std::vector<int> select_active_rus(const Scenario &s, const std::vector<int> &candidates,
                                          SelectionObjective objective = SelectionObjective::MaxEndToEnd,
                                          const DownlinkOptions &opt = {})
{
    (void)objective;
    std::size_t best_k = 0;
    double best = end_to_end_sum(s, {}, opt);
    for (std::size_t k = 1; k <= candidates.size(); ++k)
    {
        const double v = end_to_end_sum(s, {candidates.begin(), candidates.begin() + k}, opt);
        if (v > best)
        {
            best = v;
            best_k = k;
        }
    }
    return {candidates.begin(), candidates.begin() + best_k};
}

// Exhaustive search over every subset of at most eight candidates.
inline std::vector<int> select_active_rus_exhaustive(const Scenario &s, const std::vector<int> &candidates,
                                                     const DownlinkOptions &opt = {})
{
    if (candidates.size() > 8)
        throw std::invalid_argument("Exhaustive RU selection is limited to 8 candidates.");
    std::vector<int> best_set;
    double best = end_to_end_sum(s, {}, opt);
    for (unsigned mask = 1; mask < (1u << candidates.size()); ++mask)
    {
        std::vector<int> set;
        for (std::size_t i = 0; i < candidates.size(); ++i)
            if (mask & (1u << i))
                set.push_back(candidates[i]);
        const double v = end_to_end_sum(s, set, opt);
        if (v > best)
        {
            best = v;
            best_set = set;
        }
    }
    return best_set;
}

// ---------- Non-coherent uplink ----------

struct UplinkOptions
{
    double csi_age_s = -1.0; // negative: half a slot (in-slot pilots)
    int blocks_per_group = 4; // Alamouti blocks simulated per subcarrier group for bit-level fusion
    FusionStrategy fusion = FusionStrategy::ReliabilityWeighted;
    double overhead = default_overhead;
    ChannelOptions channel;
};

struct UplinkRound
{
    std::vector<int> receivers;   // gNB first, then RUs
    std::vector<int> active_rus;  // RUs whose copies reached the gNB
    std::vector<DetectionReport> per_ru_reports; // [receiver * num_ues + ue]
    std::vector<std::vector<double>> per_receiver_snr_db; // [receiver][ue] effective post-detection SNR
    std::vector<std::vector<bool>> payload_bits;
    std::vector<std::vector<bool>> fused_bits;
    std::vector<double> per_ue_fused_snr_db;
    std::vector<std::optional<int>> per_ue_mcs;
    std::vector<double> per_ue_throughput_mbps;
    std::vector<double> per_ue_fused_ber;

    double total_throughput_mbps() const
    {
        return std::accumulate(per_ue_throughput_mbps.begin(), per_ue_throughput_mbps.end(), 0.0);
    }
    // Lowest MCS position over UEs; -1 when some UE has none.
    int min_mcs() const
    {
        int m = std::numeric_limits<int>::max();
        for (const auto &c : per_ue_mcs)
            m = std::min(m, c ? *c : -1);
        return per_ue_mcs.empty() ? -1 : m;
    }
};

namespace detail
{
// Equivalent Alamouti channel at one receiver in noise-normalized units.
inline CMatrix uplink_equivalent(const GridTrajectory &traj, std::size_t rx, std::size_t time, std::size_t group,
                                 const std::vector<double> &amp_per_ue)
{
    std::vector<CMatrix> blocks;
    for (std::size_t u = 0; u < traj.n_tx; ++u)
        blocks.push_back(traj.at(rx, u, time)[group] * amp_per_ue[u]);
    return alamouti_equivalent_channel(blocks);
}

inline void append_report(DetectionReport &into, const DetectionReport &block, int stream_a, int stream_b,
                          int bits_per_symbol)
{
    const int offset = static_cast<int>(into.per_stream_index.size());
    for (int k : {stream_a, stream_b})
    {
        into.per_stream_index.push_back(block.per_stream_index[k]);
        into.per_stream_symbols.push_back(block.per_stream_symbols[k]);
        into.per_stream_post_snr_db.push_back(block.per_stream_post_snr_db[k]);
        into.bits.insert(into.bits.end(), block.bits.begin() + k * bits_per_symbol,
                         block.bits.begin() + (k + 1) * bits_per_symbol);
    }
    // Local order of the two streams within the block, by detection position.
    const auto pos = [&](int k) { return std::find(block.decode_order.begin(), block.decode_order.end(), k); };
    const bool a_first = pos(stream_a) < pos(stream_b);
    into.decode_order.push_back(offset + (a_first ? 0 : 1));
    into.decode_order.push_back(offset + (a_first ? 1 : 0));
    into.ambiguous = into.ambiguous || block.ambiguous;
}
} // namespace detail

// Two-phase non-coherent uplink. Every UE Alamouti-encodes one stream; the gNB and each
// RU separate the users with MMSE-SIC; RUs whose front-haul supports some MCS forward
// their decisions; the gNB fuses the surviving copies. Phase offsets play no role here,
// only CFO (as inter-carrier interference).
inline UplinkRound run_uplink_round(const Scenario &s, std::span<const McsEntry> table, const SyncState &sync = {},
                                    const UplinkOptions &opt = {})
{
    check_mcs_table(table);
    const auto ues = ue_ids(s);
    if (ues.empty())
        throw std::invalid_argument("Uplink round needs at least one UE.");
    for (int id : ues)
        if (s.node(id).num_antennas != 2)
            throw std::invalid_argument("Uplink Alamouti transmission needs two antennas per UE.");

    UplinkRound out;
    out.receivers = virtual_array_ids(s);
    const std::size_t n_rx = out.receivers.size();
    const std::size_t n_ue = ues.size();
    const double noise_mw = dbm_to_mw(s.noise_power_dbm());
    const double age = opt.csi_age_s < 0.0 ? 0.5 * s.ofdm.slot_duration_s() : opt.csi_age_s;
    const double bw = s.ofdm.bandwidth_hz();

    const auto grid = make_link_grid(s, ues, out.receivers, opt.channel);
    const auto traj = sample_grid(grid, {0.0, age}, opt.channel);
    const std::size_t groups = traj.num_groups();

    // Per-antenna amplitude: Alamouti splits the UE power over its two antennas.
    std::vector<double> amp;
    for (int id : ues)
        amp.push_back(std::sqrt(dbm_to_mw(s.node(id).tx_power_dbm) / 2.0 / noise_mw));

    // Phase 1: analytic post-detection SINRs, every group and both Alamouti symbols.
    std::vector<std::vector<std::vector<double>>> snr_lin(n_rx, std::vector<std::vector<double>>(n_ue));
    std::vector<CMatrix> h_est(n_rx * groups), h_true(n_rx * groups);
    for (std::size_t r = 0; r < n_rx; ++r)
    {
        const NodeSync rs = sync.of(out.receivers[r]);
        for (std::size_t g = 0; g < groups; ++g)
        {
            h_est[r * groups + g] = detail::uplink_equivalent(traj, r, 0, g, amp);
            h_true[r * groups + g] = detail::uplink_equivalent(traj, r, 1, g, amp);
            const auto sinr = sic_post_sinr(h_est[r * groups + g], h_true[r * groups + g], 1.0);
            for (std::size_t u = 0; u < n_ue; ++u)
            {
                const double ici = cfo_ici_power(sync.of(ues[u]).cfo_hz - rs.cfo_hz, s.ofdm);
                for (int k = 0; k < 2; ++k)
                {
                    const double v = sinr[2 * u + k];
                    snr_lin[r][u].push_back(ici > 0.0 ? 1.0 / (1.0 / v + ici) : v);
                }
            }
        }
    }
    out.per_receiver_snr_db.assign(n_rx, std::vector<double>(n_ue));
    for (std::size_t r = 0; r < n_rx; ++r)
        for (std::size_t u = 0; u < n_ue; ++u)
        {
            std::vector<double> db;
            for (double v : snr_lin[r][u])
                db.push_back(linear_to_db(v));
            out.per_receiver_snr_db[r][u] = effective_snr_db(db);
        }

    // Phase 2: an RU's copy arrives when its front-haul supports at least one MCS.
    std::vector<bool> forwarded(n_rx, false);
    forwarded[0] = true;
    if (n_rx > 1)
    {
        const std::vector<int> rus(out.receivers.begin() + 1, out.receivers.end());
        const auto fh = make_link_grid(s, rus, {out.receivers[0]}, opt.channel);
        const auto fh_traj = sample_grid(fh, {age}, opt.channel);
        for (std::size_t r = 0; r < rus.size(); ++r)
        {
            const auto &node = s.node(rus[r]);
            std::vector<double> db;
            for (const auto &h : fh_traj.at(0, r, 0))
                db.push_back(linear_to_db(dbm_to_mw(node.tx_power_dbm) * h.squaredNorm() / (node.num_antennas * noise_mw)));
            if (max_throughput(effective_snr_db(db), table, bw, opt.overhead).chosen_mcs)
            {
                forwarded[r + 1] = true;
                out.active_rus.push_back(rus[r]);
            }
        }
    }

    // Fusion of independent copies: LLRs add, so post-detection SNRs add.
    out.per_ue_fused_snr_db.resize(n_ue);
    out.per_ue_mcs.resize(n_ue);
    out.per_ue_throughput_mbps.resize(n_ue);
    for (std::size_t u = 0; u < n_ue; ++u)
    {
        std::vector<double> fused(snr_lin[0][u].size(), 0.0);
        for (std::size_t r = 0; r < n_rx; ++r)
            if (forwarded[r])
                for (std::size_t i = 0; i < fused.size(); ++i)
                    fused[i] += snr_lin[r][u][i];
        std::vector<double> db;
        for (double v : fused)
            db.push_back(linear_to_db(v));
        out.per_ue_fused_snr_db[u] = effective_snr_db(db);
        const auto tp = max_throughput(out.per_ue_fused_snr_db[u], table, bw, opt.overhead);
        out.per_ue_mcs[u] = tp.chosen_mcs;
        out.per_ue_throughput_mbps[u] = tp.goodput_mbps;
    }

    // Bit-level decode-and-forward with the lowest chosen modulation (QPSK if none).
    Modulation mod = Modulation::QPSK;
    int lowest = std::numeric_limits<int>::max();
    for (const auto &m : out.per_ue_mcs)
        if (m && *m < lowest)
        {
            lowest = *m;
            mod = table[*m].modulation;
        }
    const auto constellation = Constellation::make(mod);
    const int bps = constellation.bits_per_symbol;
    const int blocks = std::max(opt.blocks_per_group, 1);

    Rng payload_rng(derive_seed(s.seed, {tag(StreamTag::payload)}));
    std::uniform_int_distribution<int> pick(0, constellation.size() - 1);
    std::vector<std::vector<int>> symbols(n_ue); // [ue][group * blocks * 2 + block * 2 + k]
    out.payload_bits.assign(n_ue, {});
    for (std::size_t u = 0; u < n_ue; ++u)
        for (std::size_t i = 0; i < groups * blocks * 2; ++i)
        {
            const int idx = pick(payload_rng);
            symbols[u].push_back(idx);
            for (int b = 0; b < bps; ++b)
                out.payload_bits[u].push_back(constellation.bit_of(idx, b));
        }

    out.per_ru_reports.assign(n_rx * n_ue, {});
    for (std::size_t r = 0; r < n_rx; ++r)
    {
        Rng noise_rng(derive_seed(s.seed, {tag(StreamTag::noise), static_cast<std::uint64_t>(out.receivers[r])}));
        for (std::size_t g = 0; g < groups; ++g)
        {
            const auto &he = h_est[r * groups + g];
            const auto &ht = h_true[r * groups + g];
            for (int b = 0; b < blocks; ++b)
            {
                CVector x(2 * n_ue);
                for (std::size_t u = 0; u < n_ue; ++u)
                    for (int k = 0; k < 2; ++k)
                        x(2 * u + k) = constellation.points[symbols[u][(g * blocks + b) * 2 + k]];
                CVector y = ht * x;
                for (Eigen::Index i = 0; i < y.size(); ++i)
                    y(i) += complex_gaussian(noise_rng);
                const auto rep = sic_detect(y, he, constellation, 1.0);
                for (std::size_t u = 0; u < n_ue; ++u)
                    detail::append_report(out.per_ru_reports[r * n_ue + u], rep, static_cast<int>(2 * u),
                                          static_cast<int>(2 * u + 1), bps);
            }
        }
    }

    out.fused_bits.resize(n_ue);
    out.per_ue_fused_ber.resize(n_ue);
    for (std::size_t u = 0; u < n_ue; ++u)
    {
        std::vector<std::vector<BitDecision>> copies;
        for (std::size_t r = 0; r < n_rx; ++r)
            if (forwarded[r])
                copies.push_back(out.per_ru_reports[r * n_ue + u].bits);
        out.fused_bits[u] = fuse_decisions(std::span<const std::vector<BitDecision>>(copies), opt.fusion);
        std::size_t errors = 0;
        for (std::size_t i = 0; i < out.fused_bits[u].size(); ++i)
            errors += out.fused_bits[u][i] != out.payload_bits[u][i];
        out.per_ue_fused_ber[u] = static_cast<double>(errors) / static_cast<double>(out.fused_bits[u].size());
    }
    return out;
}

} // namespace mdmimo

#endif
