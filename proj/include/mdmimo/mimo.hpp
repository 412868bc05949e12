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

#ifndef mdmimo_mimo_H
#define mdmimo_mimo_H

#include "mdmimo/channel.hpp"
#include "mdmimo/types.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdmimo
{

struct ZfInfeasible : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

// Channel from the virtual array (all transmit nodes, columns ordered node by node)
// to each served UE. Each UE receives as many streams as it has antennas.
struct CompositeChannel
{
    std::vector<CMatrix> per_ue_blocks; // ue_ant x total_tx_ant
    std::vector<int> node_antennas;     // transmit antennas of each node, in column order

    int total_tx_antennas() const { return std::accumulate(node_antennas.begin(), node_antennas.end(), 0); }

    int total_streams() const
    {
        int s = 0;
        for (const auto &b : per_ue_blocks)
            s += static_cast<int>(b.rows());
        return s;
    }

    CMatrix stacked() const
    {
        CMatrix h(total_streams(), total_tx_antennas());
        Eigen::Index row = 0;
        for (const auto &b : per_ue_blocks)
        {
            h.middleRows(row, b.rows()) = b;
            row += b.rows();
        }
        return h;
    }

    // UE index owning each stream.
    std::vector<int> stream_owner() const
    {
        std::vector<int> owner;
        for (std::size_t u = 0; u < per_ue_blocks.size(); ++u)
            owner.insert(owner.end(), per_ue_blocks[u].rows(), static_cast<int>(u));
        return owner;
    }
};

struct PrecodingResult
{
    CMatrix precoder; // total_tx_ant x total_streams, includes the transmit power scaling
    std::vector<double> per_stream_sinr_db;
    std::vector<double> per_ue_sinr_db; // capacity-equivalent SINR over that UE's streams
    std::vector<double> per_ue_rate_bpshz;
    double stream_power_mw = 0.0;
};

// Moore-Penrose pseudo-inverse via SVD with relative rank tolerance 1e-12 * sigma_max.
inline CMatrix pseudo_inverse(const CMatrix &h, Eigen::Index *rank_out = nullptr)
{
    Eigen::JacobiSVD<CMatrix> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto &sv = svd.singularValues();
    const double tol = sv.size() ? 1e-12 * sv(0) : 0.0;
    Eigen::Index rank = 0;
    RVector inv = RVector::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > tol)
        {
            inv(i) = 1.0 / sv(i);
            ++rank;
        }
    if (rank_out)
        *rank_out = rank;
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
}

// Per-stream SINR (linear) of precoder w over the true channel h; leakage onto
// other streams counts as noise.
inline std::vector<double> stream_sinr(const CMatrix &h_true, const CMatrix &w, double noise_mw)
{
    const CMatrix g = h_true * w;
    std::vector<double> sinr(g.rows());
    for (Eigen::Index s = 0; s < g.rows(); ++s)
    {
        const double sig = std::norm(g(s, s));
        const double interference = g.row(s).squaredNorm() - sig;
        sinr[s] = sig / (std::max(interference, 0.0) + noise_mw);
    }
    return sinr;
}

// Groups per-stream SINRs into per-UE rates and capacity-equivalent SINRs.
inline void fill_ue_metrics(PrecodingResult &r, const std::vector<double> &sinr, const std::vector<int> &owner,
                            std::size_t num_ues)
{
    r.per_stream_sinr_db.clear();
    r.per_ue_rate_bpshz.assign(num_ues, 0.0);
    std::vector<int> count(num_ues, 0);
    for (std::size_t s = 0; s < sinr.size(); ++s)
    {
        r.per_stream_sinr_db.push_back(linear_to_db(sinr[s]));
        r.per_ue_rate_bpshz[owner[s]] += std::log2(1.0 + sinr[s]);
        ++count[owner[s]];
    }
    r.per_ue_sinr_db.resize(num_ues);
    for (std::size_t u = 0; u < num_ues; ++u)
        r.per_ue_sinr_db[u] = linear_to_db(std::exp2(r.per_ue_rate_bpshz[u] / std::max(count[u], 1)) - 1.0);
}

// Zero-forcing multi-user precoder. Columns of H^+ are normalized to unit norm, every
// stream gets the same power, and that power is set so the tightest node budget binds.
inline PrecodingResult zf_precoder(const CompositeChannel &h, const std::vector<double> &node_power_budgets_dbm,
                                   double noise_power_dbm)
{
    if (h.per_ue_blocks.empty())
        throw std::invalid_argument("At least one UE is required for ZF precoding.");
    if (node_power_budgets_dbm.size() != h.node_antennas.size())
        throw std::invalid_argument("One power budget per transmit node is required.");

    const CMatrix hs = h.stacked();
    if (hs.cols() != h.total_tx_antennas())
        throw std::invalid_argument("UE channel blocks do not match the transmit antenna count.");
    const Eigen::Index streams = hs.rows();

    Eigen::Index rank = 0;
    CMatrix w = pseudo_inverse(hs, &rank);
    if (rank < streams)
        throw ZfInfeasible("ZF infeasible: rank " + std::to_string(rank) + " < streams " + std::to_string(streams));

    w.colwise().normalize();

    // Stream power limited by each node's share of the unit-power precoder.
    double p = std::numeric_limits<double>::infinity();
    Eigen::Index row = 0;
    for (std::size_t n = 0; n < h.node_antennas.size(); ++n)
    {
        const double share = w.middleRows(row, h.node_antennas[n]).squaredNorm();
        if (share > 0.0)
            p = std::min(p, dbm_to_mw(node_power_budgets_dbm[n]) / share);
        row += h.node_antennas[n];
    }

    PrecodingResult r;
    r.stream_power_mw = p;
    r.precoder = std::sqrt(p) * w;
    const auto sinr = stream_sinr(hs, r.precoder, dbm_to_mw(noise_power_dbm));
    fill_ue_metrics(r, sinr, h.stream_owner(), h.per_ue_blocks.size());
    return r;
}

inline double sum_capacity_bpshz(const PrecodingResult &r)
{
    return std::accumulate(r.per_ue_rate_bpshz.begin(), r.per_ue_rate_bpshz.end(), 0.0);
}

// log2 det(I + P/(Nt sigma^2) H H^H), equal power over the transmit antennas.
inline double baseline_capacity_bpshz(const CMatrix &h, double tx_power_dbm, double noise_power_dbm)
{
    const double snr_per_antenna = dbm_to_mw(tx_power_dbm) / (static_cast<double>(h.cols()) * dbm_to_mw(noise_power_dbm));
    const CMatrix gram = h.rows() <= h.cols() ? CMatrix(h * h.adjoint()) : CMatrix(h.adjoint() * h);
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(gram, Eigen::EigenvaluesOnly);
    double c = 0.0;
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i)
        c += std::log2(1.0 + snr_per_antenna * std::max(eig.eigenvalues()(i), 0.0));
    return c;
}

inline double baseline_capacity_bpshz(const ChannelMatrix &h, double tx_power_dbm, double noise_power_dbm)
{
    return baseline_capacity_bpshz(h.entries, tx_power_dbm, noise_power_dbm);
}

inline double relative_gain(double virtual_capacity, double baseline_capacity)
{
    if (!(baseline_capacity > 0.0))
        throw std::domain_error("undefined relative gain");
    return virtual_capacity / baseline_capacity;
}

} // namespace mdmimo

#endif
