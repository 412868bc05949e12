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

#include "mdmimo/rc_predictor.hpp"

#include <gtest/gtest.h>

using namespace mdmimo;

namespace
{
// Independent Clarke-model generator: M equal-power rays with random arrival angles.
std::vector<cplx> clarke_sequence(std::uint64_t seed, double fd_dt, std::size_t n, int rays = 16)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, two_pi);
    std::vector<double> alpha(rays), phi(rays);
    for (int m = 0; m < rays; ++m)
    {
        alpha[m] = u(rng);
        phi[m] = u(rng);
    }
    std::vector<cplx> x(n);
    for (std::size_t t = 0; t < n; ++t)
    {
        cplx acc = 0.0;
        for (int m = 0; m < rays; ++m)
            acc += std::polar(1.0, two_pi * fd_dt * static_cast<double>(t) * std::cos(alpha[m]) + phi[m]);
        x[t] = acc / std::sqrt(static_cast<double>(rays));
    }
    return x;
}

double nmse(std::span<const cplx> pred, std::span<const cplx> truth)
{
    double e = 0.0, p = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i)
    {
        e += std::norm(pred[i] - truth[i]);
        p += std::norm(truth[i]);
    }
    return e / p;
}

RVector random_vector(Rng &rng, int n, double scale = 1.0)
{
    std::uniform_real_distribution<double> u(-scale, scale);
    RVector v(n);
    for (int i = 0; i < n; ++i)
        v(i) = u(rng);
    return v;
}
} // namespace

TEST(Reservoir, SpectralRadiusIsExact)
{
    for (std::uint64_t seed : {1u, 2u, 3u})
    {
        const auto r = init_reservoir(64, 0.9, 2, 0.3, seed);
        EXPECT_NEAR(spectral_radius_of(r.recurrent_weights()), 0.9, 1e-6);
        EXPECT_EQ(r.size(), 64);
        EXPECT_EQ(r.input_dim(), 2);
        EXPECT_EQ(r.state(), RVector::Zero(64));
        EXPECT_LE(r.input_weights().cwiseAbs().maxCoeff(), 1.0);
    }
    // Independent check by power iteration on W^T W is not valid for non-normal W, so
    // use Gelfand's formula ||W^k||^(1/k) instead.
    const auto r = init_reservoir(32, 0.5, 1, 1.0, 9);
    RMatrix p = RMatrix::Identity(32, 32);
    for (int k = 0; k < 400; ++k)
        p = p * r.recurrent_weights();
    EXPECT_NEAR(std::pow(p.norm(), 1.0 / 400.0), 0.5, 0.01);
}

TEST(Reservoir, RejectsUnstableRadiusAndBadArguments)
{
    try
    {
        init_reservoir(16, 1.0, 2, 0.3, 1);
        FAIL();
    }
    catch (const std::invalid_argument &e)
    {
        EXPECT_STREQ(e.what(), "echo state property violated");
    }
    EXPECT_THROW(init_reservoir(0, 0.9, 2, 0.3, 1), std::invalid_argument);
    EXPECT_THROW(init_reservoir(16, 0.9, 2, 0.0, 1), std::invalid_argument);
    EXPECT_THROW(init_reservoir(16, -0.1, 2, 0.3, 1), std::invalid_argument);
}

TEST(Reservoir, DeterministicPerSeed)
{
    const auto a = init_reservoir(32, 0.9, 2, 0.3, 42), b = init_reservoir(32, 0.9, 2, 0.3, 42),
               c = init_reservoir(32, 0.9, 2, 0.3, 43);
    EXPECT_EQ(a.recurrent_weights(), b.recurrent_weights());
    EXPECT_EQ(a.input_weights(), b.input_weights());
    EXPECT_NE(a.recurrent_weights(), c.recurrent_weights());
}

TEST(Reservoir, StepExamples)
{
    const auto r = init_reservoir(16, 0.9, 2, 1.0, 5);
    EXPECT_EQ(step(r, RVector::Zero(2)).state(), RVector::Zero(16));
    EXPECT_THROW(step(r, RVector::Zero(3)), std::invalid_argument);

    // Zero leak freezes the state whatever the input.
    Reservoir frozen(r.input_weights(), r.recurrent_weights(), 0.0, 0.9);
    Rng rng(401);
    const RVector s0 = random_vector(rng, 16, 0.5);
    frozen.set_state(s0);
    for (int i = 0; i < 10; ++i)
        frozen = step(frozen, random_vector(rng, 2, 5.0));
    EXPECT_EQ(frozen.state(), s0);

    // Explicit update formula.
    auto q = init_reservoir(16, 0.9, 2, 0.3, 6);
    q.set_state(s0);
    const RVector in = random_vector(rng, 2);
    const RVector expected =
        0.7 * s0 + 0.3 * (q.recurrent_weights() * s0 + q.input_weights() * in).array().tanh().matrix();
    EXPECT_LT((step(q, in).state() - expected).norm(), 1e-14);
}

TEST(Reservoir, StateStaysInsideUnitCube)
{
    Rng rng(402);
    auto r = init_reservoir(64, 0.95, 2, 0.8, 7);
    for (int t = 0; t < 2000; ++t)
    {
        r = step(r, random_vector(rng, 2, 50.0));
        ASSERT_LT(r.state().cwiseAbs().maxCoeff(), 1.0);
    }
}

TEST(Reservoir, ZeroInputDecays)
{
    Rng rng(403);
    auto r = init_reservoir(64, 0.9, 2, 0.3, 8);
    r.set_state(random_vector(rng, 64));
    double prev = std::numeric_limits<double>::infinity();
    for (int t = 0; t < 300; ++t)
    {
        r = step(r, RVector::Zero(2));
        if (t >= 5)
        {
            EXPECT_LT(r.state().norm(), prev) << t;
        }
        prev = r.state().norm();
    }
    EXPECT_LT(prev, 1e-3);
}

TEST(Reservoir, EchoStateForgetsInitialCondition)
{
    Rng rng(404);
    auto a = init_reservoir(64, 0.9, 2, 0.3, 10);
    auto b = a;
    a.set_state(random_vector(rng, 64));
    b.set_state(random_vector(rng, 64));
    for (int t = 0; t < 500; ++t)
    {
        const RVector in = random_vector(rng, 2);
        a.advance(in);
        b.advance(in);
    }
    EXPECT_LT((a.state() - b.state()).norm(), 1e-6);
}

TEST(Readout, ZeroTargetsAndShrinkage)
{
    Rng rng(405);
    RMatrix x(10, 100);
    for (int c = 0; c < 100; ++c)
        x.col(c) = random_vector(rng, 10);
    EXPECT_EQ(train_readout(x, RMatrix::Zero(2, 100), 1e-6).weights, RMatrix::Zero(2, 11));

    RMatrix y(2, 100);
    for (int c = 0; c < 100; ++c)
        y.col(c) = random_vector(rng, 2);
    const auto r = train_readout(x, y, 1e12);
    EXPECT_LT(r.weights.cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(r.weights.rows(), 2);
    EXPECT_EQ(r.weights.cols(), 11);
    EXPECT_EQ(train_readout(x, y, 1e-3).weights, train_readout(x, y, 1e-3).weights);
    EXPECT_THROW(train_readout(x, y, 0.0), std::invalid_argument);
    EXPECT_THROW(train_readout(x, RMatrix::Zero(2, 99), 1.0), std::invalid_argument);
}

TEST(Readout, RecoversLinearMap)
{
    Rng rng(406);
    RMatrix x(5, 50);
    for (int c = 0; c < 50; ++c)
        x.col(c) = random_vector(rng, 5);
    RMatrix a(2, 5);
    a.row(0) = random_vector(rng, 5).transpose();
    a.row(1) = random_vector(rng, 5).transpose();
    const RMatrix y = a * x;
    const auto r = train_readout(x, y, 1e-10);
    RMatrix fit(2, 50);
    for (int c = 0; c < 50; ++c)
        fit.col(c) = apply_readout(r, x.col(c));
    EXPECT_LT((fit - y).norm() / y.norm(), 1e-6);
    EXPECT_THROW(apply_readout(Readout{}, x.col(0)), std::logic_error);
}

TEST(PredictChannel, ConstantChannel)
{
    const cplx c(0.6, -0.3);
    const auto res = init_reservoir(64, 0.9, 2, 0.3, 11);
    Reservoir r = res;
    RMatrix feat(66, 480), targ(2, 480);
    for (int t = 0; t < 500; ++t)
    {
        const RVector in = to_real_input(c);
        r.advance(in);
        if (t >= 20)
        {
            feat.col(t - 20) = feature_vector(r, in);
            targ.col(t - 20) = in;
        }
    }
    const auto readout = train_readout(feat, targ, 1e-6);
    const std::vector<cplx> history(500, c);
    EXPECT_LT(std::abs(predict_channel(res, readout, history) - c), 0.01 * std::abs(c));
    EXPECT_THROW(predict_channel(res, Readout{}, history), std::logic_error);
    EXPECT_THROW(predict_channel(res, readout, std::vector<cplx>{}), std::invalid_argument);

    ChannelPredictor p(RcConfig{}, 11);
    p.fit(std::vector<std::vector<cplx>>{std::vector<cplx>(500, c)});
    EXPECT_LT(std::abs(p.predict_one(history) - c), 0.01 * std::abs(c));
}

TEST(PredictChannel, ComplexExponential)
{
    std::vector<cplx> x(2500);
    for (std::size_t n = 0; n < x.size(); ++n)
        x[n] = std::polar(1.0, two_pi * 0.01 * static_cast<double>(n));
    ChannelPredictor p(RcConfig{}, 12);
    p.fit(std::vector<std::vector<cplx>>{std::vector<cplx>(x.begin(), x.begin() + 2000)});
    const auto pred = p.predict_stream(x, 2000);
    ASSERT_EQ(pred.size(), 500u);
    const double e = nmse(pred, std::span<const cplx>(x.data() + 2000, 500));
    EXPECT_LT(10.0 * std::log10(e), -20.0);
}

TEST(PredictChannel, BeatsPersistenceOnClarkeFading)
{
    double pred_acc = 0.0, hold_acc = 0.0;
    int wins = 0;
    const int seeds = 100;
    for (int s = 0; s < seeds; ++s)
    {
        const auto x = clarke_sequence(1000 + s, 0.01, 2500);
        ChannelPredictor p(RcConfig{}, 2000 + s);
        p.fit(std::vector<std::vector<cplx>>{std::vector<cplx>(x.begin(), x.begin() + 2000)});
        const auto pred = p.predict_stream(x, 2000);
        const std::span<const cplx> truth(x.data() + 2000, 499), held(x.data() + 1999, 499);
        const double a = nmse(pred, truth), b = nmse(held, truth);
        pred_acc += a;
        hold_acc += b;
        wins += a < b;
    }
    EXPECT_LT(pred_acc, hold_acc);
    EXPECT_GE(wins, 95);
}

TEST(PredictChannel, StreamMatchesOneShotPrediction)
{
    const auto x = clarke_sequence(7, 0.02, 800);
    ChannelPredictor p(RcConfig{}, 13);
    p.fit(std::vector<std::vector<cplx>>{std::vector<cplx>(x.begin(), x.begin() + 600)});
    const auto stream = p.predict_stream(x, 700);
    for (std::size_t t : {700u, 750u, 799u})
    {
        const std::vector<cplx> hist(x.begin(), x.begin() + t);
        EXPECT_LT(std::abs(stream[t - 700] - p.predict_one(hist)), 1e-9);
    }
    EXPECT_THROW(p.predict_stream(x, 0), std::invalid_argument);
    EXPECT_THROW(p.predict_one(x, 0), std::invalid_argument);
}

TEST(PredictChannel, MultiStepDegradesGracefully)
{
    std::vector<cplx> x(1200);
    for (std::size_t n = 0; n < x.size(); ++n)
        x[n] = std::polar(1.0, two_pi * 0.01 * static_cast<double>(n));
    ChannelPredictor p(RcConfig{}, 14);
    p.fit(std::vector<std::vector<cplx>>{std::vector<cplx>(x.begin(), x.begin() + 1000)});
    const std::vector<cplx> hist(x.begin(), x.begin() + 1100);
    for (int k : {1, 2, 5})
        EXPECT_LT(std::abs(p.predict_one(hist, k) - x[1099 + k]), 0.1) << k;
}

TEST(OnlinePredictor, PersistenceUntilFirstFitThenLearns)
{
    RcConfig cfg;
    cfg.retrain_interval = 200;
    OnlineChannelPredictor p(cfg, 15);
    EXPECT_EQ(p.predict_next(), cplx(0.0));
    double err_model = 0.0, err_hold = 0.0;
    cplx last = 0.0;
    for (int n = 0; n < 1200; ++n)
    {
        const cplx h = std::polar(1.0, two_pi * 0.01 * n);
        if (n > 0 && n < 200)
        {
            EXPECT_EQ(p.predict_next(), last);
        }
        if (n >= 600)
        {
            err_model += std::norm(p.predict_next() - h);
            err_hold += std::norm(last - h);
        }
        p.observe(h);
        last = h;
    }
    EXPECT_TRUE(p.ready());
    EXPECT_EQ(p.fits(), 6);
    EXPECT_LT(err_model, 0.01 * err_hold);
}
