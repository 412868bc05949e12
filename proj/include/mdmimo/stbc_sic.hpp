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

#ifndef mdmimo_stbc_sic_H
#define mdmimo_stbc_sic_H

#include "mdmimo/channel.hpp"
#include "mdmimo/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace mdmimo
{

enum class Modulation
{
    BPSK,
    QPSK,
    QAM16,
    QAM64
};

inline std::string_view to_string(Modulation m)
{
    switch (m)
    {
    case Modulation::BPSK:
        return "BPSK";
    case Modulation::QPSK:
        return "QPSK";
    case Modulation::QAM16:
        return "16QAM";
    case Modulation::QAM64:
        return "64QAM";
    }
    return "?";
}

inline Modulation parse_modulation(std::string_view s)
{
    if (s == "BPSK" || s == "bpsk")
        return Modulation::BPSK;
    if (s == "QPSK" || s == "qpsk")
        return Modulation::QPSK;
    if (s == "16QAM" || s == "QAM16" || s == "16qam" || s == "qam16")
        return Modulation::QAM16;
    if (s == "64QAM" || s == "QAM64" || s == "64qam" || s == "qam64")
        return Modulation::QAM64;
    throw std::invalid_argument("Unknown modulation '" + std::string(s) + "'.");
}

inline int bits_per_symbol(Modulation m)
{
    switch (m)
    {
    case Modulation::BPSK:
        return 1;
    case Modulation::QPSK:
        return 2;
    case Modulation::QAM16:
        return 4;
    case Modulation::QAM64:
        return 6;
    }
    return 0;
}

// Gray-mapped constellation with unit average energy. Point i carries the bits of i,
// most significant bit first (NR bit-to-symbol mapping).
struct Constellation
{
    Modulation label = Modulation::QPSK;
    std::vector<cplx> points;
    int bits_per_symbol = 2;

    static Constellation make(Modulation m)
    {
        Constellation c;
        c.label = m;
        c.bits_per_symbol = mdmimo::bits_per_symbol(m);
        const int n = 1 << c.bits_per_symbol;
        c.points.resize(n);
        for (int i = 0; i < n; ++i)
        {
            auto bit = [&](int k) { return 1.0 - 2.0 * ((i >> (c.bits_per_symbol - 1 - k)) & 1); };
            switch (m)
            {
            case Modulation::BPSK:
                c.points[i] = {bit(0), 0.0};
                break;
            case Modulation::QPSK:
                c.points[i] = cplx(bit(0), bit(1)) / std::sqrt(2.0);
                break;
            case Modulation::QAM16:
                c.points[i] = cplx(bit(0) * (2.0 - bit(2)), bit(1) * (2.0 - bit(3))) / std::sqrt(10.0);
                break;
            case Modulation::QAM64:
                c.points[i] = cplx(bit(0) * (4.0 - bit(2) * (2.0 - bit(4))), bit(1) * (4.0 - bit(3) * (2.0 - bit(5)))) /
                              std::sqrt(42.0);
                break;
            }
        }
        return c;
    }

    int size() const { return static_cast<int>(points.size()); }

    bool bit_of(int index, int k) const { return (index >> (bits_per_symbol - 1 - k)) & 1; }

    // Nearest point; ties go to the lowest index.
    int slice(cplx z) const
    {
        int best = 0;
        double best_d = std::norm(z - points[0]);
        for (int i = 1; i < size(); ++i)
        {
            const double d = std::norm(z - points[i]);
            if (d < best_d)
            {
                best_d = d;
                best = i;
            }
        }
        return best;
    }
};

struct BitDecision
{
    bool bit = false;
    double reliability = 0.0; // |LLR|, finite

    double signed_llr() const { return bit ? reliability : -reliability; }
};

struct DetectionReport
{
    std::vector<int> per_stream_index;
    std::vector<cplx> per_stream_symbols;
    std::vector<double> per_stream_post_snr_db;
    std::vector<int> decode_order;
    std::vector<BitDecision> bits; // stream 0 bits first, then stream 1, ...
    bool ambiguous = false;        // a decision was a tie on a dead channel
};

inline constexpr double max_reliability = 1e9;

// Max-log bit LLRs of an unbiased estimate z = s + e with E|e|^2 = 1/snr.
inline void append_bit_decisions(std::vector<BitDecision> &out, const Constellation &c, cplx z, double snr)
{
    for (int k = 0; k < c.bits_per_symbol; ++k)
    {
        double d0 = std::numeric_limits<double>::infinity(), d1 = d0;
        for (int i = 0; i < c.size(); ++i)
        {
            double &slot = c.bit_of(i, k) ? d1 : d0;
            slot = std::min(slot, std::norm(z - c.points[i]));
        }
        double llr = (d0 - d1) * snr; // > 0 favours bit 1
        if (!std::isfinite(llr))
            llr = d0 > d1 ? max_reliability : (d0 < d1 ? -max_reliability : 0.0);
        llr = std::clamp(llr, -max_reliability, max_reliability);
        out.push_back({llr > 0.0, std::abs(llr)});
    }
}

// ---------- Alamouti space-time block code ----------

struct StbcBlock
{
    Eigen::Matrix2cd code_matrix; // rows = symbol time, columns = transmit antenna
};

inline StbcBlock alamouti_encode(cplx s1, cplx s2)
{
    StbcBlock b;
    b.code_matrix << s1, s2, -std::conj(s2), std::conj(s1);
    return b;
}

// Linear Alamouti combining. y is 2 x rx_ant (time x antenna); h is rx_ant x 2.
inline DetectionReport alamouti_decode(const CMatrix &y, const CMatrix &h, double noise_var, const Constellation &c)
{
    if (y.rows() != 2 || h.cols() != 2 || y.cols() != h.rows())
        throw std::invalid_argument("Alamouti decode expects y: 2 x rx_ant and h: rx_ant x 2.");

    cplx z1 = 0.0, z2 = 0.0;
    double g = 0.0;
    for (Eigen::Index r = 0; r < h.rows(); ++r)
    {
        const cplx h1 = h(r, 0), h2 = h(r, 1);
        z1 += std::conj(h1) * y(0, r) + h2 * std::conj(y(1, r));
        z2 += std::conj(h2) * y(0, r) - h1 * std::conj(y(1, r));
        g += std::norm(h1) + std::norm(h2);
    }

    DetectionReport rep;
    rep.decode_order = {0, 1};
    const double snr = g > 0.0 ? g / noise_var : 0.0;
    const double snr_db = g > 0.0 ? linear_to_db(snr) : -std::numeric_limits<double>::infinity();
    for (cplx z : {z1, z2})
    {
        const cplx zu = g > 0.0 ? z / g : cplx(0.0);
        const int idx = c.slice(zu);
        rep.per_stream_index.push_back(idx);
        rep.per_stream_symbols.push_back(c.points[idx]);
        rep.per_stream_post_snr_db.push_back(snr_db);
        append_bit_decisions(rep.bits, c, zu, snr);
    }
    rep.ambiguous = !(g > 0.0);
    return rep;
}

// Equivalent linear model of several Alamouti users seen by one receiver:
// [y(t1); conj(y(t2))] = H_eq [s1_u0, s2_u0, s1_u1, s2_u1, ...] + noise.
inline CMatrix alamouti_equivalent_channel(std::span<const CMatrix> per_ue)
{
    if (per_ue.empty())
        throw std::invalid_argument("At least one user channel is required.");
    const Eigen::Index nr = per_ue.front().rows();
    CMatrix heq(2 * nr, 2 * static_cast<Eigen::Index>(per_ue.size()));
    for (std::size_t u = 0; u < per_ue.size(); ++u)
    {
        const auto &h = per_ue[u];
        if (h.rows() != nr || h.cols() != 2)
            throw std::invalid_argument("Alamouti user channels must all be rx_ant x 2.");
        for (Eigen::Index r = 0; r < nr; ++r)
        {
            heq(r, 2 * u) = h(r, 0);
            heq(r, 2 * u + 1) = h(r, 1);
            heq(nr + r, 2 * u) = std::conj(h(r, 1));
            heq(nr + r, 2 * u + 1) = -std::conj(h(r, 0));
        }
    }
    return heq;
}

// Stacks a 2 x rx_ant Alamouti observation into [y(t1); conj(y(t2))].
inline CVector alamouti_stack(const CMatrix &y)
{
    CVector v(2 * y.cols());
    v.head(y.cols()) = y.row(0).transpose();
    v.tail(y.cols()) = y.row(1).transpose().conjugate();
    return v;
}

// ---------- Successive interference cancellation ----------

namespace detail
{
// Ordering metric 1 / [(H^H H + s2 I)^-1]_kk for the active columns; SINR_k = metric/s2 - 1.
inline RVector mmse_metric(const CMatrix &h, double noise_var, CMatrix &filter)
{
    const Eigen::Index n = h.cols();
    const CMatrix gram = h.adjoint() * h + noise_var * CMatrix::Identity(n, n);
    const CMatrix inv = gram.ldlt().solve(CMatrix::Identity(n, n));
    filter = inv * h.adjoint();
    RVector metric(n);
    for (Eigen::Index k = 0; k < n; ++k)
        metric(k) = 1.0 / std::max(inv(k, k).real(), std::numeric_limits<double>::min());
    return metric;
}

inline double metric_to_sinr(double metric, double noise_var)
{
    if (noise_var <= 0.0)
        return std::numeric_limits<double>::infinity();
    return std::max(metric / noise_var - 1.0, 0.0);
}
} // namespace detail

// Ordered MMSE-SIC (V-BLAST): detect the strongest remaining stream, slice, cancel, repeat.
inline DetectionReport sic_detect(const CVector &y, const CMatrix &h, const Constellation &c, double noise_var)
{
    const Eigen::Index streams = h.cols();
    if (streams > h.rows())
        throw std::invalid_argument("underdetermined without coding");
    if (y.size() != h.rows())
        throw std::invalid_argument("Received vector length must match the channel rows.");

    DetectionReport rep;
    rep.per_stream_index.assign(streams, 0);
    rep.per_stream_symbols.assign(streams, 0.0);
    rep.per_stream_post_snr_db.assign(streams, 0.0);
    std::vector<std::vector<BitDecision>> bits(streams);

    std::vector<int> active(streams);
    std::iota(active.begin(), active.end(), 0);
    CVector residual = y;

    while (!active.empty())
    {
        CMatrix ha(h.rows(), static_cast<Eigen::Index>(active.size()));
        for (std::size_t i = 0; i < active.size(); ++i)
            ha.col(i) = h.col(active[i]);

        CMatrix filter;
        const RVector metric = detail::mmse_metric(ha, noise_var, filter);
        Eigen::Index pick = 0;
        for (Eigen::Index i = 1; i < metric.size(); ++i)
            if (metric(i) > metric(pick))
                pick = i;

        const int k = active[pick];
        const cplx bias = (filter.row(pick) * ha.col(pick))(0);
        const cplx z = (filter.row(pick) * residual)(0);
        const cplx zu = std::abs(bias) > 0.0 ? z / bias : cplx(0.0);
        const double sinr = std::abs(bias) > 0.0 ? detail::metric_to_sinr(metric(pick), noise_var) : 0.0;

        const int idx = c.slice(zu);
        rep.per_stream_index[k] = idx;
        rep.per_stream_symbols[k] = c.points[idx];
        rep.per_stream_post_snr_db[k] = linear_to_db(sinr);
        if (!(std::abs(bias) > 0.0))
            rep.ambiguous = true;
        append_bit_decisions(bits[k], c, zu, sinr);
        rep.decode_order.push_back(k);

        residual -= h.col(k) * c.points[idx];
        active.erase(active.begin() + pick);
    }
    for (auto &b : bits)
        rep.bits.insert(rep.bits.end(), b.begin(), b.end());
    return rep;
}

// Post-detection SINRs of ordered MMSE-SIC when the receiver designs its filters from
// h_est but the signal passes through h_true. Decisions are assumed correct; the
// cancellation residue (h_true - h_est) s of detected streams stays as interference.
// Returns per-stream SINR (linear) and fills the detection order.
inline std::vector<double> sic_post_sinr(const CMatrix &h_est, const CMatrix &h_true, double noise_var,
                                         std::vector<int> *order_out = nullptr)
{
    const Eigen::Index streams = h_est.cols();
    if (streams > h_est.rows())
        throw std::invalid_argument("underdetermined without coding");
    std::vector<double> sinr(streams, 0.0);
    std::vector<int> active(streams), done;
    std::iota(active.begin(), active.end(), 0);
    while (!active.empty())
    {
        CMatrix ha(h_est.rows(), static_cast<Eigen::Index>(active.size()));
        for (std::size_t i = 0; i < active.size(); ++i)
            ha.col(i) = h_est.col(active[i]);
        CMatrix filter;
        const RVector metric = detail::mmse_metric(ha, noise_var, filter);
        Eigen::Index pick = 0;
        for (Eigen::Index i = 1; i < metric.size(); ++i)
            if (metric(i) > metric(pick))
                pick = i;

        const int k = active[pick];
        const auto w = filter.row(pick);
        const double sig = std::norm((w * h_true.col(k))(0));
        double interf = noise_var * w.squaredNorm();
        for (int j : active)
            if (j != k)
                interf += std::norm((w * h_true.col(j))(0));
        for (int j : done)
            interf += std::norm((w * (h_true.col(j) - h_est.col(j)))(0));
        sinr[k] = interf > 0.0 ? sig / interf : std::numeric_limits<double>::infinity();

        done.push_back(k);
        active.erase(active.begin() + pick);
    }
    if (order_out)
        *order_out = done;
    return sinr;
}

// Exhaustive joint maximum-likelihood detection; the brute-force reference for SIC.
inline DetectionReport ml_joint_detect(const CVector &y, const CMatrix &h, const Constellation &c, double noise_var)
{
    const int streams = static_cast<int>(h.cols());
    double hyp = std::pow(static_cast<double>(c.size()), streams);
    if (hyp > 4096.0)
        throw std::invalid_argument("oracle too large");
    const int total = static_cast<int>(hyp);
    const int nbits = streams * c.bits_per_symbol;

    std::vector<double> best0(nbits, std::numeric_limits<double>::infinity()), best1 = best0;
    std::vector<int> idx(streams, 0), best_idx(streams, 0);
    double best = std::numeric_limits<double>::infinity();
    CVector s(streams);

    for (int n = 0; n < total; ++n)
    {
        int rem = n;
        for (int k = streams - 1; k >= 0; --k)
        {
            idx[k] = rem % c.size();
            rem /= c.size();
            s(k) = c.points[idx[k]];
        }
        const double d = (y - h * s).squaredNorm();
        if (d < best)
        {
            best = d;
            best_idx = idx;
        }
        for (int k = 0; k < streams; ++k)
            for (int b = 0; b < c.bits_per_symbol; ++b)
            {
                auto &slot = c.bit_of(idx[k], b) ? best1[k * c.bits_per_symbol + b] : best0[k * c.bits_per_symbol + b];
                slot = std::min(slot, d);
            }
    }

    DetectionReport rep;
    rep.decode_order.resize(streams);
    std::iota(rep.decode_order.begin(), rep.decode_order.end(), 0);
    for (int k = 0; k < streams; ++k)
    {
        rep.per_stream_index.push_back(best_idx[k]);
        rep.per_stream_symbols.push_back(c.points[best_idx[k]]);
        const double mf = h.col(k).squaredNorm();
        rep.per_stream_post_snr_db.push_back(noise_var > 0.0 ? linear_to_db(mf / noise_var)
                                                             : std::numeric_limits<double>::infinity());
    }
    const double scale = noise_var > 0.0 ? 1.0 / noise_var : max_reliability;
    for (int i = 0; i < nbits; ++i)
    {
        double llr = std::clamp((best0[i] - best1[i]) * scale, -max_reliability, max_reliability);
        if (std::isnan(llr))
            llr = 0.0;
        const int k = i / c.bits_per_symbol, b = i % c.bits_per_symbol;
        // The hard decision follows the ML tuple; the magnitude is the max-log reliability.
        rep.bits.push_back({c.bit_of(best_idx[k], b), std::abs(llr)});
    }
    return rep;
}

// ---------- Post-detection fusion ----------

enum class FusionStrategy
{
    ReliabilityWeighted, // LLR sum; ML under independent Gaussian residuals
    MajorityVote
};

inline std::vector<bool> fuse_decisions(std::span<const std::vector<BitDecision>> copies, FusionStrategy strategy)
{
    if (copies.empty())
        throw std::invalid_argument("At least one copy is required for fusion.");
    const std::size_t n = copies.front().size();
    for (const auto &c : copies)
        if (c.size() != n)
            throw std::invalid_argument("All copies must have the same bit length.");

    std::vector<bool> out(n);
    if (strategy == FusionStrategy::ReliabilityWeighted)
    {
        for (std::size_t i = 0; i < n; ++i)
        {
            double sum = 0.0;
            for (const auto &c : copies)
                sum += c[i].signed_llr();
            if (sum != 0.0)
                out[i] = sum > 0.0;
            else
                out[i] = copies.front()[i].bit;
        }
        return out;
    }

    // Tie-break copy: highest mean reliability, first on ties.
    std::size_t anchor = 0;
    double anchor_rel = -1.0;
    for (std::size_t c = 0; c < copies.size(); ++c)
    {
        double m = 0.0;
        for (const auto &b : copies[c])
            m += b.reliability;
        m = n ? m / static_cast<double>(n) : 0.0;
        if (m > anchor_rel)
        {
            anchor_rel = m;
            anchor = c;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
    {
        std::size_t ones = 0;
        for (const auto &c : copies)
            ones += c[i].bit ? 1 : 0;
        const std::size_t zeros = copies.size() - ones;
        out[i] = ones == zeros ? copies[anchor][i].bit : ones > zeros;
    }
    return out;
}

inline std::vector<bool> fuse_decisions(std::span<const DetectionReport> reports, FusionStrategy strategy)
{
    std::vector<std::vector<BitDecision>> copies;
    copies.reserve(reports.size());
    for (const auto &r : reports)
        copies.push_back(r.bits);
    return fuse_decisions(std::span<const std::vector<BitDecision>>(copies), strategy);
}

} // namespace mdmimo

#endif
