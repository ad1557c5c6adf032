#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "chanpred/error.hpp"
#include "chanpred/trainer.hpp"

using namespace chanpred;
using train::cd;

namespace {

// Run r, step t, bin f holds a value that encodes its own coordinates.
est::EstimateSeries coded_series(std::size_t runs, std::size_t steps, std::size_t freq) {
    est::EstimateSeries s(runs, steps, freq);
    for (std::size_t r = 0; r < runs; ++r) {
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t f = 0; f < freq; ++f) {
                s.at(r, t, f) = {static_cast<double>(r * 100000 + t), static_cast<double>(f)};
            }
        }
    }
    return s;
}

est::EstimateSeries smooth_series(std::size_t runs, std::size_t steps, std::size_t freq, std::uint64_t seed) {
    est::EstimateSeries s(runs, steps, freq);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 6.28);
    for (std::size_t r = 0; r < runs; ++r) {
        const double p0 = u(rng), w = 0.05 + 0.05 * u(rng) / 6.28;
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t f = 0; f < freq; ++f) {
                s.at(r, t, f) = std::polar(0.8, p0 + w * static_cast<double>(t) + 0.2 * static_cast<double>(f));
            }
        }
    }
    return s;
}

}  // namespace

TEST(Dataset, SplitCountsAndCoverage) {
    const auto series = coded_series(3, 64, 4);
    const auto d = train::build_dataset(series, 7);
    EXPECT_EQ(d.train.size(), 18u);
    EXPECT_EQ(d.val.size(), 3u);
    EXPECT_EQ(d.test.size(), 3u);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto* part : {&d.train, &d.val, &d.test}) {
        for (const auto& seg : *part) {
            EXPECT_EQ(seg.time, 8u);
            EXPECT_EQ(seg.freq, 4u);
            EXPECT_TRUE(seen.insert({seg.run, seg.index}).second);
            // Contiguous slice of its own run.
            for (std::size_t t = 0; t < seg.time; ++t) {
                EXPECT_EQ(seg.at(t, 2), series.at(seg.run, seg.index * 8 + t, 2));
            }
        }
    }
    EXPECT_EQ(seen.size(), 24u);
    for (std::size_t r = 0; r < 3; ++r) {
        std::size_t val_in_run = 0;
        for (const auto& seg : d.val) val_in_run += seg.run == r;
        EXPECT_EQ(val_in_run, 1u);
    }
}

TEST(Dataset, SeededAndDeterministic) {
    const auto series = coded_series(4, 64, 2);
    auto ids = [](const train::DatasetSplit& d) {
        std::vector<std::pair<std::size_t, std::size_t>> v;
        for (const auto& s : d.test) v.emplace_back(s.run, s.index);
        for (const auto& s : d.val) v.emplace_back(s.run, s.index);
        return v;
    };
    EXPECT_EQ(ids(train::build_dataset(series, 3)), ids(train::build_dataset(series, 3)));
    bool differs = false;
    for (std::uint64_t seed = 4; seed < 10 && !differs; ++seed) {
        differs = ids(train::build_dataset(series, seed)) != ids(train::build_dataset(series, 3));
    }
    EXPECT_TRUE(differs);
}

TEST(Dataset, Errors) {
    EXPECT_THROW(train::build_dataset(coded_series(1, 60, 2), 1), ValidationError);
    EXPECT_THROW(train::build_dataset(coded_series(1, 64, 2), 1, {8, 6, 1, 2}), ValidationError);
}

TEST(Targets, ShiftedValuesAndMask) {
    const auto d = train::build_dataset(coded_series(1, 128, 3), 1);
    const auto& seg = d.train.front();
    const std::size_t m = 4;
    const auto ex = train::make_targets(seg, m);
    EXPECT_EQ(ex.input.channels, 2u);
    EXPECT_EQ(ex.target.channels, 2 * m);
    for (std::size_t k = 0; k < m; ++k) {
        EXPECT_EQ(ex.mask.valid_time[2 * k], seg.time - (k + 1));
        EXPECT_EQ(ex.mask.valid_time[2 * k + 1], seg.time - (k + 1));
        for (std::size_t t = 0; t + k + 1 < seg.time; ++t) {
            EXPECT_EQ(ex.target.at(2 * k, t, 1), seg.at(t + k + 1, 1).real());
            EXPECT_EQ(ex.target.at(2 * k + 1, t, 1), seg.at(t + k + 1, 1).imag());
        }
    }
    for (std::size_t t = 0; t < seg.time; ++t) EXPECT_EQ(ex.input.at(0, t, 2), seg.at(t, 2).real());
    EXPECT_THROW(train::make_targets(seg, seg.time), std::invalid_argument);
}

TEST(Targets, NoLossReadsPastTheSegmentEnd) {
    // Every value outside the segment is NaN; a finite loss proves the mask
    // never reaches them.
    const std::size_t T = 32;
    est::EstimateSeries s(1, 8 * T, 4);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (auto& v : s.data()) v = {nan, nan};
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    for (std::size_t t = 2 * T; t < 3 * T; ++t) {
        for (std::size_t f = 0; f < 4; ++f) s.at(0, t, f) = {g(rng), g(rng)};
    }
    const auto d = train::build_dataset(s, 1, {8, 8, 0, 0});
    const train::Segment* clean = nullptr;
    for (const auto& seg : d.train) clean = seg.index == 2 ? &seg : clean;
    ASSERT_NE(clean, nullptr);

    const auto spec = nn::NetworkSpec::standard(5);
    std::mt19937_64 prng(2);
    const auto params = nn::init_params(spec, prng);
    const std::span<const train::Segment> one(clean, 1);
    EXPECT_TRUE(std::isfinite(train::mean_loss(spec, params, one)));
    for (double v : train::evaluate_mse_all(spec, params, one)) EXPECT_TRUE(std::isfinite(v));
    EXPECT_TRUE(std::isfinite(train::trivial_baseline_mse(one, 5, 5)));
}

TEST(Evaluate, MatchesDirectComputation) {
    const auto series = smooth_series(1, 256, 6, 3);
    const auto d = train::build_dataset(series, 2);
    const auto spec = nn::NetworkSpec::standard(3);
    std::mt19937_64 rng(4);
    const auto params = nn::init_params(spec, rng);

    for (std::size_t dt = 1; dt <= 3; ++dt) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& seg : d.train) {
            const auto out = nn::network_forward(spec, params, train::to_tensor(seg));
            for (std::size_t t = 0; t + dt < seg.time; ++t) {
                for (std::size_t f = 0; f < seg.freq; ++f) {
                    const cd pred{out.at(2 * (dt - 1), t, f), out.at(2 * dt - 1, t, f)};
                    sum += std::norm(pred - seg.at(t + dt, f));
                    ++count;
                }
            }
        }
        EXPECT_NEAR(train::evaluate_mse(spec, params, d.train, dt), sum / static_cast<double>(count), 1e-12);
    }
    EXPECT_THROW(train::evaluate_mse(spec, params, d.train, 0), std::out_of_range);
    EXPECT_THROW(train::evaluate_mse(spec, params, d.train, 4), std::out_of_range);
}

TEST(Evaluate, PerComplexMseIsTwiceComponentLoss) {
    const auto series = smooth_series(1, 256, 6, 5);
    const auto d = train::build_dataset(series, 2);
    const auto spec = nn::NetworkSpec::standard(1);
    std::mt19937_64 rng(6);
    const auto params = nn::init_params(spec, rng);
    EXPECT_NEAR(train::evaluate_mse(spec, params, d.train, 1), 2.0 * train::mean_loss(spec, params, d.train),
                1e-12);
}

TEST(TrivialBaseline, ConstantAndRampOracles) {
    est::EstimateSeries constant(1, 64, 3);
    for (auto& v : constant.data()) v = {0.3, -0.2};
    const auto dc = train::build_dataset(constant, 1);
    for (std::size_t dt = 1; dt <= 5; ++dt) EXPECT_EQ(train::trivial_baseline_mse(dc.train, dt, 5), 0.0);

    // value(t) = c t: squared error |c dt|^2 exactly, strictly increasing.
    est::EstimateSeries ramp(1, 64, 3);
    const cd c{0.01, 0.02};
    for (std::size_t t = 0; t < 64; ++t) {
        for (std::size_t f = 0; f < 3; ++f) ramp.at(0, t, f) = c * static_cast<double>(t);
    }
    const auto dr = train::build_dataset(ramp, 1);
    double prev = 0.0;
    for (std::size_t dt = 1; dt <= 5; ++dt) {
        const double v = train::trivial_baseline_mse(dr.train, dt, 5);
        EXPECT_NEAR(v, std::norm(c) * static_cast<double>(dt * dt), 1e-15);
        EXPECT_GT(v, prev);
        prev = v;
    }
    EXPECT_THROW(train::trivial_baseline_mse(dr.train, 6, 5), std::out_of_range);
}

TEST(Train, ZeroEpochsReturnsInitialization) {
    const auto d = train::build_dataset(smooth_series(1, 256, 6, 7), 1);
    const auto spec = nn::NetworkSpec::standard(2);
    train::TrainConfig cfg;
    cfg.epochs = 0;
    cfg.m = 2;
    cfg.seed = 99;
    const auto r = train::train(spec, d, cfg);
    std::mt19937_64 rng(99);
    EXPECT_EQ(r.params, nn::init_params(spec, rng));
    EXPECT_TRUE(r.history.empty());
    EXPECT_EQ(r.steps, 0);
}

TEST(Train, LearnsAndIsDeterministic) {
    const auto d = train::build_dataset(smooth_series(2, 512, 8, 8), 1);
    const auto spec = nn::NetworkSpec::standard(2);
    train::TrainConfig cfg;
    cfg.epochs = 6;
    cfg.m = 2;
    std::size_t calls = 0;
    const auto a = train::train(spec, d, cfg, [&](std::size_t, std::size_t, std::size_t, double) { ++calls; });
    const auto b = train::train(spec, d, cfg);
    EXPECT_EQ(a.params, b.params);
    ASSERT_EQ(a.history.size(), 6u);
    EXPECT_EQ(a.steps, static_cast<std::int64_t>(6 * d.train.size()));
    EXPECT_EQ(calls, 6 * d.train.size());
    EXPECT_LT(a.history.back().train_loss, a.history.front().train_loss);
    EXPECT_LT(a.history.back().val_loss, a.history.front().val_loss);

    const auto report = train::evaluate_report(spec, a.params, d, a.history);
    ASSERT_EQ(report.rows.size(), 2u);
    EXPECT_EQ(report.rows[1].delta_t, 2u);
    EXPECT_DOUBLE_EQ(report.rows[0].mse_val, train::evaluate_mse(spec, a.params, d.val, 1));
    EXPECT_DOUBLE_EQ(report.rows[1].mse_test, train::evaluate_mse(spec, a.params, d.test, 2));
    EXPECT_DOUBLE_EQ(report.rows[1].mse_trivial, train::trivial_baseline_mse(d.test, 2, 2));
}

TEST(Train, ConfigErrors) {
    const auto d = train::build_dataset(smooth_series(1, 256, 6, 9), 1);
    const auto spec = nn::NetworkSpec::standard(2);
    train::TrainConfig cfg;
    cfg.m = 3;
    EXPECT_THROW(train::train(spec, d, cfg), ConfigError);
    cfg.m = 2;
    cfg.lr = 0.0;
    EXPECT_THROW(train::train(spec, d, cfg), ConfigError);
}

TEST(Train, NonFiniteDataReportsDivergence) {
    auto series = smooth_series(1, 256, 6, 10);
    for (auto& v : series.data()) v = {std::numeric_limits<double>::infinity(), 0.0};
    const auto d = train::build_dataset(series, 1);
    const auto spec = nn::NetworkSpec::standard(2);
    train::TrainConfig cfg;
    cfg.m = 2;
    cfg.epochs = 1;
    try {
        train::train(spec, d, cfg);
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    }
}

TEST(Predict, MatchesNetworkOnContextWindow) {
    const auto series = smooth_series(2, 128, 6, 11);
    const auto spec = nn::NetworkSpec::standard(3);
    std::mt19937_64 rng(12);
    const auto params = nn::init_params(spec, rng);
    const std::size_t t0 = 70, window = 40;
    const auto pred = train::predict_ahead(spec, params, series, 1, t0, window);
    ASSERT_EQ(pred.size(), 3u);

    nn::Tensor3 in(2, window, 6);
    for (std::size_t t = 0; t < window; ++t) {
        for (std::size_t f = 0; f < 6; ++f) {
            in.at(0, t, f) = series.at(1, t0 + 1 - window + t, f).real();
            in.at(1, t, f) = series.at(1, t0 + 1 - window + t, f).imag();
        }
    }
    const auto out = nn::network_forward(spec, params, in);
    for (std::size_t k = 0; k < 3; ++k) {
        ASSERT_EQ(pred[k].size(), 6u);
        for (std::size_t f = 0; f < 6; ++f) {
            EXPECT_EQ(pred[k][f], (cd{out.at(2 * k, window - 1, f), out.at(2 * k + 1, window - 1, f)}));
        }
    }
    EXPECT_THROW(train::predict_ahead(spec, params, series, 2, 0), std::out_of_range);
}
