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

#ifndef mdmimo_rc_predictor_H
#define mdmimo_rc_predictor_H

#include "mdmimo/seeding.hpp"
#include "mdmimo/types.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace mdmimo
{

// Leaky echo state network. The input and recurrent weights are drawn once and never
// change; only the state evolves.
class Reservoir
{
  public:
    Reservoir() = default;

    Reservoir(RMatrix input_weights, RMatrix recurrent_weights, double leak_rate, double spectral_radius)
        : input_weights_(std::move(input_weights)), recurrent_weights_(std::move(recurrent_weights)),
          recurrent_sparse_(recurrent_weights_.sparseView()), state_(RVector::Zero(recurrent_weights_.rows())),
          leak_rate_(leak_rate), spectral_radius_(spectral_radius)
    {
    }

    const RMatrix &input_weights() const { return input_weights_; }
    const RMatrix &recurrent_weights() const { return recurrent_weights_; }
    const RVector &state() const { return state_; }
    double leak_rate() const { return leak_rate_; }
    double spectral_radius() const { return spectral_radius_; }
    int size() const { return static_cast<int>(state_.size()); }
    int input_dim() const { return static_cast<int>(input_weights_.cols()); }

    void reset() { state_.setZero(); }

    void set_state(const RVector &s)
    {
        if (s.size() != state_.size())
            throw std::invalid_argument("Reservoir state dimension mismatch.");
        state_ = s;
    }

    // state <- (1 - leak) state + leak tanh(W_rec state + W_in input)
    void advance(const RVector &input)
    {
        if (input.size() != input_weights_.cols())
            throw std::invalid_argument("Reservoir input dimension mismatch.");
        const RVector pre = recurrent_sparse_ * state_ + input_weights_ * input;
        state_ = (1.0 - leak_rate_) * state_ + leak_rate_ * pre.array().tanh().matrix();
    }

    // Batched update for independent sequences sharing the same weights: each column
    // of `states` is one sequence's state, each column of `inputs` its current input.
    void advance_batch(RMatrix &states, const RMatrix &inputs) const
    {
        const RMatrix pre = recurrent_sparse_ * states + input_weights_ * inputs;
        states = (1.0 - leak_rate_) * states + leak_rate_ * pre.array().tanh().matrix();
    }

  private:
    RMatrix input_weights_;
    RMatrix recurrent_weights_;
    Eigen::SparseMatrix<double> recurrent_sparse_;
    RVector state_;
    double leak_rate_ = 0.3;
    double spectral_radius_ = 0.9;
};

inline double spectral_radius_of(const RMatrix &w)
{
    Eigen::EigenSolver<RMatrix> es(w, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Sparse random recurrent weights rescaled to the requested spectral radius, input
// weights uniform in [-1, 1], zero state.
inline Reservoir init_reservoir(int size, double spectral_radius, int input_dim, double leak_rate, std::uint64_t seed,
                                double density = 0.1)
{
    if (size < 1 || input_dim < 1)
        throw std::invalid_argument("Reservoir size and input dimension must be positive.");
    if (!(spectral_radius > 0.0))
        throw std::invalid_argument("Spectral radius must be positive.");
    if (spectral_radius >= 1.0)
        throw std::invalid_argument("echo state property violated");
    if (!(leak_rate > 0.0 && leak_rate <= 1.0))
        throw std::invalid_argument("Leak rate must lie in (0, 1].");

    Rng rng(derive_seed(seed, {tag(StreamTag::reservoir)}));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::bernoulli_distribution keep(density);

    RMatrix w_in(size, input_dim);
    for (Eigen::Index c = 0; c < w_in.cols(); ++c)
        for (Eigen::Index r = 0; r < w_in.rows(); ++r)
            w_in(r, c) = u(rng);

    RMatrix w(size, size);
    double radius = 0.0;
    // Very small or sparse draws can be nilpotent; redraw until there is a scale to fix.
    for (int attempt = 0; attempt < 1000 && radius < 1e-9; ++attempt)
    {
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                w(r, c) = keep(rng) ? u(rng) : 0.0;
        radius = spectral_radius_of(w);
    }
    if (radius < 1e-9)
        throw std::runtime_error("Could not draw a reservoir with non-zero spectral radius.");
    w *= spectral_radius / radius;
    return {std::move(w_in), std::move(w), leak_rate, spectral_radius};
}

inline Reservoir step(Reservoir res, const RVector &input)
{
    res.advance(input);
    return res;
}

struct Readout
{
    RMatrix weights; // output_dim x (reservoir + input_dim + 1)
    double ridge_lambda = 1e-6;

    bool trained() const { return weights.size() > 0; }
};

// Closed-form ridge regression W = Y X^T (X X^T + lambda I)^-1 on bias-augmented
// features. Each column of `features` is one sample [state; input].
inline Readout train_readout(const RMatrix &features, const RMatrix &targets, double ridge_lambda)
{
    if (features.cols() < 1 || features.cols() != targets.cols())
        throw std::invalid_argument("Readout training needs matching, non-empty samples.");
    if (!(ridge_lambda > 0.0))
        throw std::invalid_argument("Ridge lambda must be positive.");

    const Eigen::Index f = features.rows() + 1;
    RMatrix x(f, features.cols());
    x.topRows(features.rows()) = features;
    x.row(f - 1).setOnes();

    RMatrix gram = x * x.transpose();
    gram.diagonal().array() += ridge_lambda;
    const RMatrix yxt = targets * x.transpose();
    // W gram = Y X^T, gram symmetric positive definite
    Readout r;
    r.ridge_lambda = ridge_lambda;
    r.weights = gram.ldlt().solve(yxt.transpose()).transpose();
    return r;
}

inline RVector feature_vector(const Reservoir &res, const RVector &input)
{
    RVector f(res.size() + input.size());
    f << res.state(), input;
    return f;
}

inline RVector apply_readout(const Readout &r, const RVector &features)
{
    if (!r.trained())
        throw std::logic_error("Readout has not been trained.");
    if (r.weights.cols() != features.size() + 1)
        throw std::invalid_argument("Readout dimension mismatch.");
    return r.weights.leftCols(features.size()) * features + r.weights.col(features.size());
}

inline RVector to_real_input(cplx h)
{
    RVector v(2);
    v << h.real(), h.imag();
    return v;
}

// One-step-ahead prediction: drives a zeroed copy of the reservoir through `history`
// as (re, im) pairs and reads out the next coefficient.
inline cplx predict_channel(const Reservoir &res, const Readout &readout, std::span<const cplx> history)
{
    if (!readout.trained())
        throw std::logic_error("Readout has not been trained.");
    if (history.empty())
        throw std::invalid_argument("Prediction needs a non-empty history.");
    if (res.input_dim() != 2)
        throw std::invalid_argument("Channel prediction expects a two-input reservoir.");
    Reservoir r = res;
    r.reset();
    RVector in;
    for (cplx h : history)
    {
        in = to_real_input(h);
        r.advance(in);
    }
    const RVector out = apply_readout(readout, feature_vector(r, in));
    return {out(0), out(1)};
}

struct RcConfig
{
    int size = 64;
    double spectral_radius = 0.9;
    double leak_rate = 0.3;
    double ridge_lambda = 1e-6;
    double density = 0.1;
    int washout = 20;
    double input_gain = 1.0; // inputs are scaled to this RMS before entering the reservoir
    int retrain_interval = 100;
    int window = 1000;
};

// Channel predictor shared by many coefficient sequences with common statistics (for
// example all antenna pairs of one link). Sequences are normalized by their pooled RMS.
class ChannelPredictor
{
  public:
    ChannelPredictor(const RcConfig &cfg, std::uint64_t seed)
        : cfg_(cfg), reservoir_(init_reservoir(cfg.size, cfg.spectral_radius, 2, cfg.leak_rate, seed, cfg.density))
    {
    }

    // Shares an existing reservoir; only the readout is specific to this predictor.
    ChannelPredictor(const RcConfig &cfg, Reservoir reservoir) : cfg_(cfg), reservoir_(std::move(reservoir))
    {
        if (reservoir_.input_dim() != 2)
            throw std::invalid_argument("Channel prediction expects a two-input reservoir.");
    }

    const Reservoir &reservoir() const { return reservoir_; }
    const Readout &readout() const { return readout_; }
    double input_scale() const { return scale_; }

    // Teacher-forced one-step training over every sequence (all must share a length).
    void fit(std::span<const std::vector<cplx>> sequences)
    {
        if (sequences.empty())
            throw std::invalid_argument("No training sequences.");
        const std::size_t len = sequences.front().size();
        for (const auto &s : sequences)
            if (s.size() != len)
                throw std::invalid_argument("Training sequences must share one length.");
        const int washout = std::min<int>(cfg_.washout, static_cast<int>(len) / 4);
        if (len < static_cast<std::size_t>(washout) + 2)
            throw std::invalid_argument("Training sequences are too short.");

        double power = 0.0;
        for (const auto &s : sequences)
            for (cplx h : s)
                power += std::norm(h);
        power /= static_cast<double>(len * sequences.size());
        scale_ = power > 0.0 ? cfg_.input_gain / std::sqrt(power / 2.0) : 1.0;

        const auto n_seq = static_cast<Eigen::Index>(sequences.size());
        const Eigen::Index samples_per = static_cast<Eigen::Index>(len) - 1 - washout;
        const Eigen::Index feat = reservoir_.size() + 2;
        RMatrix features(feat, samples_per * n_seq), targets(2, samples_per * n_seq);

        RMatrix states = RMatrix::Zero(reservoir_.size(), n_seq);
        RMatrix inputs(2, n_seq);
        for (std::size_t t = 0; t + 1 < len; ++t)
        {
            for (Eigen::Index q = 0; q < n_seq; ++q)
                inputs.col(q) = to_real_input(sequences[q][t] * scale_);
            reservoir_.advance_batch(states, inputs);
            if (static_cast<int>(t) < washout)
                continue;
            const Eigen::Index base = (static_cast<Eigen::Index>(t) - washout);
            for (Eigen::Index q = 0; q < n_seq; ++q)
            {
                const Eigen::Index col = q * samples_per + base;
                features.col(col) << states.col(q), inputs.col(q);
                targets.col(col) = to_real_input(sequences[q][t + 1] * scale_);
            }
        }
        readout_ = train_readout(features, targets, cfg_.ridge_lambda);
    }

    // Predicts `steps` samples past the end of each history (closed loop beyond one step).
    std::vector<cplx> predict(std::span<const std::vector<cplx>> histories, int steps = 1) const
    {
        if (!readout_.trained())
            throw std::logic_error("Readout has not been trained.");
        if (steps < 1)
            throw std::invalid_argument("Prediction horizon must be at least one step.");
        const auto n_seq = static_cast<Eigen::Index>(histories.size());
        std::vector<cplx> out(histories.size());
        if (n_seq == 0)
            return out;
        const std::size_t len = histories.front().size();
        RMatrix states = RMatrix::Zero(reservoir_.size(), n_seq);
        RMatrix inputs(2, n_seq);
        for (std::size_t t = 0; t < len; ++t)
        {
            for (Eigen::Index q = 0; q < n_seq; ++q)
                inputs.col(q) = to_real_input(histories[q].at(t) * scale_);
            reservoir_.advance_batch(states, inputs);
        }
        RMatrix feat(reservoir_.size() + 2, n_seq);
        for (int k = 0; k < steps; ++k)
        {
            feat << states, inputs;
            const RMatrix y = readout_.weights.leftCols(feat.rows()) * feat +
                              readout_.weights.col(feat.rows()).replicate(1, n_seq);
            if (k + 1 < steps)
            {
                inputs = y;
                reservoir_.advance_batch(states, inputs);
            }
            else
                for (Eigen::Index q = 0; q < n_seq; ++q)
                    out[q] = cplx(y(0, q), y(1, q)) / scale_;
        }
        return out;
    }

    // Teacher-forced streaming: out[t - start] predicts sequence[t] from sequence[0..t-1].
    std::vector<cplx> predict_stream(std::span<const cplx> sequence, std::size_t start) const
    {
        if (!readout_.trained())
            throw std::logic_error("Readout has not been trained.");
        if (start < 1 || start > sequence.size())
            throw std::invalid_argument("Streaming start must lie in [1, length].");
        Reservoir r = reservoir_;
        r.reset();
        std::vector<cplx> out;
        out.reserve(sequence.size() - start);
        for (std::size_t t = 0; t + 1 < sequence.size(); ++t)
        {
            const RVector in = to_real_input(sequence[t] * scale_);
            r.advance(in);
            if (t + 1 >= start)
            {
                const RVector y = apply_readout(readout_, feature_vector(r, in));
                out.emplace_back(y(0) / scale_, y(1) / scale_);
            }
        }
        return out;
    }

    cplx predict_one(const std::vector<cplx> &history, int steps = 1) const
    {
        return predict(std::span<const std::vector<cplx>>(&history, 1), steps).front();
    }

  private:
    RcConfig cfg_;
    Reservoir reservoir_;
    Readout readout_;
    double scale_ = 1.0;
};

// Online one-step predictor: keeps a sliding window of observations and refits the
// readout every `retrain_interval` samples.
class OnlineChannelPredictor
{
  public:
    OnlineChannelPredictor(const RcConfig &cfg, std::uint64_t seed) : cfg_(cfg), predictor_(cfg, seed) {}

    void observe(cplx h)
    {
        window_.push_back(h);
        if (static_cast<int>(window_.size()) > cfg_.window)
            window_.pop_front();
        if (++since_fit_ >= cfg_.retrain_interval && static_cast<int>(window_.size()) > cfg_.washout + 2)
        {
            const std::vector<std::vector<cplx>> seq{std::vector<cplx>(window_.begin(), window_.end())};
            predictor_.fit(seq);
            since_fit_ = 0;
            ++fits_;
        }
    }

    bool ready() const { return fits_ > 0; }
    int fits() const { return fits_; }

    // Falls back to persistence until the first fit.
    cplx predict_next() const
    {
        if (window_.empty())
            return 0.0;
        if (!ready())
            return window_.back();
        return predictor_.predict_one(std::vector<cplx>(window_.begin(), window_.end()));
    }

  private:
    RcConfig cfg_;
    ChannelPredictor predictor_;
    std::deque<cplx> window_;
    int since_fit_ = 0;
    int fits_ = 0;
};

} // namespace mdmimo

#endif
