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

#ifndef mdmimo_channel_H
#define mdmimo_channel_H

#include "mdmimo/scenario.hpp"
#include "mdmimo/seeding.hpp"
#include "mdmimo/types.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace mdmimo
{

// UMi street-canyon pathloss in dB. Distances below 1 m are clamped to 1 m.
inline double pathloss_db(double distance_m, double fc_ghz, bool los)
{
    if (!(fc_ghz > 0.0))
        throw std::invalid_argument("Carrier frequency must be positive.");
    const double d = std::max(distance_m, 1.0);
    const double pl_los = 32.4 + 21.0 * std::log10(d) + 20.0 * std::log10(fc_ghz);
    if (los)
        return pl_los;
    const double pl_nlos = 35.3 * std::log10(d) + 22.4 + 21.3 * std::log10(fc_ghz);
    return std::max(pl_los, pl_nlos);
}

// UMi line-of-sight probability.
inline double los_probability(double distance_m)
{
    const double d = std::max(distance_m, 1.0);
    const double e = std::exp(-d / 36.0);
    return std::min(18.0 / d, 1.0) * (1.0 - e) + e;
}

struct ChannelMatrix
{
    CMatrix entries; // rx_ant x tx_ant
    int subcarrier_index = 0;
    int time_slot = 0;
};

enum class TemporalModel
{
    GaussMarkov,    // first-order autoregressive with Jakes one-lag correlation
    SumOfSinusoids, // Jakes spectrum, full J0 autocorrelation at every lag
};

struct ChannelOptions
{
    int num_groups = 8; // independent fading bands across the subcarriers
    TemporalModel temporal_model = TemporalModel::SumOfSinusoids;
    int num_sinusoids = 16;
    bool shadowing = false;
    double shadowing_std_los_db = 4.0;
    double shadowing_std_nlos_db = 7.82;
};

struct LinkState
{
    int tx_id = 0;
    int rx_id = 0;
    std::vector<CMatrix> fading; // per subcarrier group, rx_ant x tx_ant, includes pathloss amplitude
    double doppler_hz = 0.0;
    double pathloss_db = 0.0;
    bool los = false;
    std::uint64_t stream_seed = 0;
    Rng rng;

    int rx_antennas() const { return fading.empty() ? 0 : static_cast<int>(fading.front().rows()); }
    int tx_antennas() const { return fading.empty() ? 0 : static_cast<int>(fading.front().cols()); }
    double amplitude() const { return std::pow(10.0, -pathloss_db / 20.0); }
};

inline int subcarrier_group(int subcarrier, int num_subcarriers, int num_groups)
{
    return std::clamp(subcarrier * num_groups / num_subcarriers, 0, num_groups - 1);
}

// Center subcarrier index of a group.
inline int group_center_subcarrier(int group, int num_subcarriers, int num_groups)
{
    return static_cast<int>((group + 0.5) * num_subcarriers / num_groups);
}

// I.i.d. CN(0,1) entries scaled by the link's pathloss amplitude.
inline ChannelMatrix draw_fading(const LinkState &link, Rng &rng)
{
    ChannelMatrix h;
    h.entries = complex_gaussian_matrix(rng, link.rx_antennas(), link.tx_antennas()) * link.amplitude();
    return h;
}

// Gauss-Markov step with rho = J0(2 pi f_d dt); preserves the link's mean entry power.
inline LinkState evolve_fading(LinkState link, double dt_s)
{
    if (dt_s < 0.0)
        throw std::invalid_argument("Time step cannot be negative.");
    const double rho = std::cyl_bessel_j(0.0, two_pi * link.doppler_hz * dt_s);
    if (rho == 1.0)
        return link;
    const double innovation = std::sqrt(1.0 - rho * rho);
    for (auto &h : link.fading)
    {
        const CMatrix w = draw_fading(link, link.rng).entries;
        h = rho * h + innovation * w;
    }
    return link;
}

inline double link_snr_db(const LinkState &link, double tx_power_dbm, const OfdmConfig &ofdm, double noise_figure_db)
{
    const double noise_dbm = -174.0 + 10.0 * std::log10(ofdm.bandwidth_hz()) + noise_figure_db;
    return tx_power_dbm - link.pathloss_db - noise_dbm;
}

// Builds the link between two scenario nodes: LOS draw, pathloss, Doppler from the
// sum of both ends' ground speeds (mobile-to-mobile maximum Doppler) and initial fading.
inline LinkState make_link(const Scenario &s, int tx_id, int rx_id, const ChannelOptions &opt = {})
{
    const auto &tx = s.node(tx_id);
    const auto &rx = s.node(rx_id);
    const auto a = static_cast<std::uint64_t>(tx_id);
    const auto b = static_cast<std::uint64_t>(rx_id);

    LinkState l;
    l.tx_id = tx_id;
    l.rx_id = rx_id;

    // Reciprocal large-scale state: LOS and shadowing depend on the unordered pair.
    const auto lo = std::min(a, b), hi = std::max(a, b);
    Rng large_scale(derive_seed(s.seed, {tag(StreamTag::los), lo, hi}));
    const double d = (tx.position_m - rx.position_m).norm();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    l.los = u(large_scale) < los_probability(d);
    l.pathloss_db = pathloss_db(d, s.ofdm.fc_hz / 1e9, l.los);
    if (opt.shadowing)
    {
        std::normal_distribution<double> sf(0.0, l.los ? opt.shadowing_std_los_db : opt.shadowing_std_nlos_db);
        l.pathloss_db = std::max(0.0, l.pathloss_db + sf(large_scale));
    }

    l.doppler_hz = doppler_hz(tx.velocity_mps.norm() + rx.velocity_mps.norm(), s.ofdm.fc_hz);
    l.stream_seed = derive_seed(s.seed, {tag(StreamTag::link_fading), a, b});
    l.rng.seed(l.stream_seed);
    l.fading.reserve(opt.num_groups);
    for (int g = 0; g < opt.num_groups; ++g)
    {
        l.fading.push_back(CMatrix::Zero(rx.num_antennas, tx.num_antennas));
        l.fading.back() = draw_fading(l, l.rng).entries;
    }
    return l;
}

// Sum-of-sinusoids Rayleigh process with uniformly random arrival angles and phases.
// Its ensemble autocorrelation is J0(2 pi f_d tau) at every lag, so unlike the
// Gauss-Markov model it carries structure a predictor can learn.
class SumOfSinusoidsFading
{
  public:
    SumOfSinusoidsFading() = default;

    SumOfSinusoidsFading(int rows, int cols, int groups, double doppler_hz, double amplitude, int num_sinusoids, Rng &rng)
        : rows_(rows), cols_(cols), groups_(groups), m_(num_sinusoids), amplitude_(amplitude)
    {
        if (rows < 1 || cols < 1 || groups < 1 || num_sinusoids < 1)
            throw std::invalid_argument("Sum-of-sinusoids dimensions must be positive.");
        std::uniform_real_distribution<double> u(0.0, two_pi);
        const std::size_t n = static_cast<std::size_t>(rows) * cols * groups * num_sinusoids;
        omega_.resize(n);
        phase_.resize(n);
        for (std::size_t i = 0; i < n; ++i)
        {
            omega_[i] = two_pi * doppler_hz * std::cos(u(rng));
            phase_[i] = u(rng);
        }
    }

    static SumOfSinusoidsFading for_link(const LinkState &link, int num_sinusoids)
    {
        Rng rng(mix64(link.stream_seed ^ 0x5D5D5D5DULL));
        return {link.rx_antennas(), link.tx_antennas(), static_cast<int>(link.fading.size()), link.doppler_hz,
                link.amplitude(), num_sinusoids, rng};
    }

    // Per-group channel matrices at time t.
    std::vector<CMatrix> at(double t_s) const
    {
        std::vector<CMatrix> out(groups_, CMatrix(rows_, cols_));
        const double norm = amplitude_ / std::sqrt(static_cast<double>(m_));
        std::size_t i = 0;
        for (int g = 0; g < groups_; ++g)
            for (int c = 0; c < cols_; ++c)
                for (int r = 0; r < rows_; ++r)
                {
                    cplx acc = 0.0;
                    for (int k = 0; k < m_; ++k, ++i)
                        acc += std::polar(1.0, omega_[i] * t_s + phase_[i]);
                    out[g](r, c) = norm * acc;
                }
        return out;
    }

  private:
    int rows_ = 0, cols_ = 0, groups_ = 0, m_ = 0;
    double amplitude_ = 0.0;
    std::vector<double> omega_, phase_;
};

// Samples a link's per-group channel at increasing times under the chosen temporal model.
inline std::vector<std::vector<CMatrix>> sample_trajectory(const LinkState &link, const std::vector<double> &times_s,
                                                           const ChannelOptions &opt)
{
    std::vector<std::vector<CMatrix>> out;
    out.reserve(times_s.size());
    if (opt.temporal_model == TemporalModel::SumOfSinusoids)
    {
        const auto sos = SumOfSinusoidsFading::for_link(link, opt.num_sinusoids);
        for (double t : times_s)
            out.push_back(sos.at(t));
        return out;
    }
    LinkState state = link;
    double now = times_s.empty() ? 0.0 : times_s.front();
    for (double t : times_s)
    {
        if (t < now)
            throw std::invalid_argument("Trajectory times must be non-decreasing.");
        state = evolve_fading(std::move(state), t - now);
        now = t;
        out.push_back(state.fading);
    }
    return out;
}

} // namespace mdmimo

#endif
