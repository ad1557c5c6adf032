#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "chanpred/error.hpp"
#include "chanpred/nn.hpp"

using namespace chanpred;
using namespace chanpred::nn;

namespace {

Tensor3 random_tensor(std::size_t c, std::size_t t, std::size_t f, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Tensor3 x(c, t, f);
    for (auto& v : x.data) v = g(rng);
    return x;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

// Direct evaluation of the convolution sum, one output element at a time.
Tensor3 naive_conv(const Tensor3& in, const LayerSpec& l, const std::vector<double>& k,
                   const std::vector<double>& b) {
    Tensor3 out(l.out_ch, in.time, in.freq);
    const long centre = static_cast<long>((l.k_f - 1) / 2);
    for (std::size_t o = 0; o < l.out_ch; ++o) {
        for (std::size_t t = 0; t < in.time; ++t) {
            for (std::size_t f = 0; f < in.freq; ++f) {
                double acc = b[o];
                for (std::size_t i = 0; i < l.in_ch; ++i) {
                    for (std::size_t a = 0; a < l.k_t; ++a) {
                        const long ts = static_cast<long>(t) - static_cast<long>(a * l.d_t);
                        if (ts < 0) continue;
                        for (std::size_t c = 0; c < l.k_f; ++c) {
                            const long fs = static_cast<long>(f) +
                                            (static_cast<long>(c) - centre) * static_cast<long>(l.d_f);
                            if (fs < 0 || fs >= static_cast<long>(in.freq)) continue;
                            acc += k[((o * l.in_ch + i) * l.k_t + a) * l.k_f + c] *
                                   in.at(i, static_cast<std::size_t>(ts), static_cast<std::size_t>(fs));
                        }
                    }
                }
                out.at(o, t, f) = acc;
            }
        }
    }
    return out;
}

Parameters random_params(const NetworkSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Parameters p = init_params(spec, rng);
    std::uniform_real_distribution<double> small(-0.1, 0.1);
    for (auto& l : p.layers) {
        for (auto& v : l.bias) v = small(rng);
        for (auto& v : l.res_bias) v = small(rng);
    }
    return p;
}

double max_abs(const Tensor3& a, const Tensor3& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace

TEST(Spec, StandardLayout) {
    const auto spec = NetworkSpec::standard(10);
    ASSERT_EQ(spec.layers.size(), 5u);
    const std::size_t dil[] = {1, 4, 16, 64};
    const std::size_t ch[] = {2, 6, 12, 12, 6};
    for (std::size_t l = 0; l < 4; ++l) {
        EXPECT_EQ(spec.layers[l].k_t, 4u);
        EXPECT_EQ(spec.layers[l].k_f, 5u);
        EXPECT_EQ(spec.layers[l].d_t, dil[l]);
        EXPECT_EQ(spec.layers[l].d_f, 1u);
        EXPECT_EQ(spec.layers[l].in_ch, ch[l]);
        EXPECT_EQ(spec.layers[l].out_ch, ch[l + 1]);
        EXPECT_TRUE(spec.layers[l].has_activation);
        EXPECT_TRUE(spec.layers[l].has_residual);
    }
    EXPECT_EQ(spec.layers[4].out_ch, 20u);
    EXPECT_EQ(spec.layers[4].k_t * spec.layers[4].k_f, 1u);
    EXPECT_EQ(spec.receptive_field(), 256u);
    EXPECT_NO_THROW(spec.validate());
    EXPECT_THROW(NetworkSpec::standard(0), std::invalid_argument);

    std::size_t expected = 0;
    for (const auto& l : spec.layers) {
        expected += l.out_ch * l.in_ch * l.k_t * l.k_f + l.out_ch;
        if (l.has_residual) expected += l.out_ch * l.in_ch + l.out_ch;
    }
    std::mt19937_64 rng(1);
    EXPECT_EQ(init_params(spec, rng).count(), expected);
    EXPECT_EQ(expected, 6512u);
}

TEST(Conv, MatchesNaiveOracle) {
    std::mt19937_64 rng(2);
    for (const LayerSpec l : {LayerSpec{2, 3, 4, 5, 1, 1}, LayerSpec{3, 2, 4, 5, 4, 1}, LayerSpec{2, 2, 3, 3, 2, 2},
                              LayerSpec{4, 5, 1, 1, 1, 1}}) {
        const auto in = random_tensor(l.in_ch, 30, 17, rng);
        const auto k = random_vec(l.kernel_size(), rng);
        const auto b = random_vec(l.out_ch, rng);
        EXPECT_LT(max_abs(dilated_conv2d(in, l, k, b), naive_conv(in, l, k, b)), 1e-12);
    }
}

TEST(Conv, ShapeErrors) {
    const LayerSpec l{2, 3, 4, 5, 1, 1};
    Tensor3 wrong(3, 10, 10);
    std::vector<double> k(l.kernel_size()), b(3);
    EXPECT_THROW(dilated_conv2d(wrong, l, k, b), std::invalid_argument);
    Tensor3 in(2, 10, 10);
    std::vector<double> short_k(5);
    EXPECT_THROW(dilated_conv2d(in, l, short_k, b), std::invalid_argument);
}

TEST(Forward, ZeroParametersGiveZeroOutput) {
    const auto spec = NetworkSpec::standard(3);
    const auto params = Parameters::zeros_like(spec);
    std::mt19937_64 rng(3);
    const auto out = network_forward(spec, params, random_tensor(2, 20, 8, rng));
    EXPECT_EQ(out.channels, 6u);
    for (double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(Forward, IdentityResidualPassesInput) {
    const LayerSpec l{4, 4, 4, 5, 2, 1, true, true};
    LayerParams p;
    p.kernel.assign(l.kernel_size(), 0.0);
    p.bias.assign(4, 0.0);
    p.res_kernel.assign(16, 0.0);
    for (std::size_t i = 0; i < 4; ++i) p.res_kernel[i * 4 + i] = 1.0;
    p.res_bias.assign(4, 0.0);
    std::mt19937_64 rng(4);
    const auto in = random_tensor(4, 12, 9, rng);
    EXPECT_EQ(layer_forward(in, l, p).data, in.data);
}

TEST(Forward, WrongInputChannelsThrow) {
    const auto spec = NetworkSpec::standard(2);
    const auto params = Parameters::zeros_like(spec);
    EXPECT_THROW(network_forward(spec, params, Tensor3(3, 10, 10)), std::invalid_argument);
}

TEST(Forward, CausalityIsBitwise) {
    const auto spec = NetworkSpec::standard(2);
    const auto params = random_params(spec, 5);
    std::mt19937_64 rng(6);
    auto in = random_tensor(2, 300, 16, rng);
    const auto base = network_forward(spec, params, in);
    const std::size_t t0 = 150;
    for (std::size_t f = 0; f < 16; ++f) in.at(1, t0, f) += 1.0;
    const auto moved = network_forward(spec, params, in);
    for (std::size_t c = 0; c < base.channels; ++c) {
        for (std::size_t t = 0; t < t0; ++t) {
            for (std::size_t f = 0; f < 16; ++f) ASSERT_EQ(base.at(c, t, f), moved.at(c, t, f));
        }
    }
    double change = 0.0;
    for (std::size_t f = 0; f < 16; ++f) change += std::abs(base.at(0, t0, f) - moved.at(0, t0, f));
    EXPECT_GT(change, 0.0);
}

TEST(Forward, ReceptiveFieldIs256Steps) {
    const auto spec = NetworkSpec::standard(2);
    const auto params = random_params(spec, 7);
    std::mt19937_64 rng(8);
    const std::size_t T = 300, t = 290;
    auto in = random_tensor(2, T, 8, rng);
    const auto base = network_forward(spec, params, in);
    auto probe = [&](std::size_t ts) {
        auto x = in;
        for (std::size_t f = 0; f < 8; ++f) x.at(0, ts, f) += 0.5;
        const auto out = network_forward(spec, params, x);
        bool same = true;
        for (std::size_t c = 0; c < out.channels; ++c) {
            for (std::size_t f = 0; f < 8; ++f) same = same && out.at(c, t, f) == base.at(c, t, f);
        }
        return same;
    };
    EXPECT_FALSE(probe(t - 255));
    EXPECT_TRUE(probe(t - 256));
}

TEST(Forward, FrequencyShiftEquivariance) {
    const auto spec = NetworkSpec::standard(2);
    const auto params = random_params(spec, 9);
    std::mt19937_64 rng(10);
    const std::size_t F = 64, shift = 5;
    const auto in = random_tensor(2, 40, F, rng);
    Tensor3 shifted(2, 40, F);
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t t = 0; t < 40; ++t) {
            for (std::size_t f = shift; f < F; ++f) shifted.at(c, t, f) = in.at(c, t, f - shift);
        }
    }
    const auto a = network_forward(spec, params, in);
    const auto b = network_forward(spec, params, shifted);
    // Four 5-wide layers reach 8 bins; stay clear of both edges.
    for (std::size_t c = 0; c < a.channels; ++c) {
        for (std::size_t t = 0; t < 40; ++t) {
            for (std::size_t f = 8; f + shift + 8 < F; ++f) {
                EXPECT_NEAR(b.at(c, t, f + shift), a.at(c, t, f), 1e-12);
            }
        }
    }
}

TEST(Loss, BruteForce) {
    std::mt19937_64 rng(11);
    const auto pred = random_tensor(4, 10, 6, rng);
    const auto target = random_tensor(4, 10, 6, rng);
    const TimeMask mask{{9, 9, 8, 8}};
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t t = 0; t < mask.valid_time[c]; ++t) {
            for (std::size_t f = 0; f < 6; ++f) {
                const double d = pred.at(c, t, f) - target.at(c, t, f);
                sum += d * d;
                ++count;
            }
        }
    }
    const auto r = mse_loss(pred, target, mask);
    EXPECT_EQ(mask.count(6), count);
    EXPECT_NEAR(r.loss, sum / static_cast<double>(count), 1e-14);
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t t = 0; t < 10; ++t) {
            for (std::size_t f = 0; f < 6; ++f) {
                const double expected = t < mask.valid_time[c]
                                            ? 2.0 * (pred.at(c, t, f) - target.at(c, t, f)) / static_cast<double>(count)
                                            : 0.0;
                EXPECT_NEAR(r.grad.at(c, t, f), expected, 1e-15);
            }
        }
    }
}

TEST(Loss, ConstantOffsetAndIdentity) {
    Tensor3 a(2, 5, 3, 1.0), b(2, 5, 3, 1.25);
    const auto full = TimeMask::full(2, 5);
    EXPECT_DOUBLE_EQ(mse_loss(a, a, full).loss, 0.0);
    for (double g : mse_loss(a, a, full).grad.data) EXPECT_EQ(g, 0.0);
    EXPECT_DOUBLE_EQ(mse_loss(a, b, full).loss, 0.0625);
}

TEST(Loss, MaskedEntriesMayHoldNaN) {
    Tensor3 pred(2, 6, 4, 0.5), target(2, 6, 4, 0.0);
    const TimeMask mask{{5, 4}};
    for (std::size_t f = 0; f < 4; ++f) {
        target.at(0, 5, f) = std::numeric_limits<double>::quiet_NaN();
        target.at(1, 4, f) = std::numeric_limits<double>::quiet_NaN();
        target.at(1, 5, f) = std::numeric_limits<double>::quiet_NaN();
    }
    const auto r = mse_loss(pred, target, mask);
    EXPECT_DOUBLE_EQ(r.loss, 0.25);
    for (double g : r.grad.data) EXPECT_TRUE(std::isfinite(g));
}

TEST(Loss, Errors) {
    Tensor3 a(2, 5, 3), b(2, 4, 3);
    EXPECT_THROW(mse_loss(a, b, TimeMask::full(2, 5)), std::invalid_argument);
    EXPECT_THROW(mse_loss(a, a, TimeMask{{0, 0}}), std::invalid_argument);
}

TEST(Backward, ZeroLossGradientGivesZeroGradients) {
    const auto spec = NetworkSpec::standard(2);
    const auto params = random_params(spec, 12);
    std::mt19937_64 rng(13);
    ForwardTrace trace;
    const auto out = network_forward(spec, params, random_tensor(2, 20, 8, rng), &trace);
    const auto r = network_backward(spec, params, trace, Tensor3(out.channels, out.time, out.freq));
    EXPECT_EQ(r.grads, Parameters::zeros_like(spec));
    for (double v : r.input_grad.data) EXPECT_EQ(v, 0.0);
}

TEST(Backward, GradientIsLinearInLossScale) {
    const auto spec = NetworkSpec::standard(2);
    const auto params = random_params(spec, 14);
    std::mt19937_64 rng(15);
    ForwardTrace trace;
    const auto out = network_forward(spec, params, random_tensor(2, 20, 8, rng), &trace);
    auto g1 = random_tensor(out.channels, out.time, out.freq, rng);
    auto g2 = g1;
    for (auto& v : g2.data) v *= 2.0;
    const auto a = network_backward(spec, params, trace, g1).grads;
    const auto b = network_backward(spec, params, trace, g2).grads;
    std::vector<double> av, bv;
    a.for_each([&](const std::string&, std::span<const double> s) { av.insert(av.end(), s.begin(), s.end()); });
    b.for_each([&](const std::string&, std::span<const double> s) { bv.insert(bv.end(), s.begin(), s.end()); });
    ASSERT_EQ(av.size(), bv.size());
    for (std::size_t i = 0; i < av.size(); ++i) EXPECT_NEAR(bv[i], 2.0 * av[i], 1e-12 * (1.0 + std::abs(av[i])));
}

TEST(Backward, ZeroInputZeroesFirstKernelGradient) {
    const auto spec = NetworkSpec::standard(2);
    const auto params = random_params(spec, 16);
    std::mt19937_64 rng(17);
    ForwardTrace trace;
    const auto out = network_forward(spec, params, Tensor3(2, 20, 8), &trace);
    const auto g = network_backward(spec, params, trace, random_tensor(out.channels, 20, 8, rng)).grads;
    for (double v : g.layers[0].kernel) EXPECT_EQ(v, 0.0);
    for (double v : g.layers[0].res_kernel) EXPECT_EQ(v, 0.0);
    double bias_mag = 0.0;
    for (double v : g.layers[0].bias) bias_mag += std::abs(v);
    EXPECT_GT(bias_mag, 0.0);
}

TEST(Backward, InputGradientMatchesFiniteDifference) {
    const auto spec = NetworkSpec::standard(2);
    const auto params = random_params(spec, 18);
    std::mt19937_64 rng(19);
    auto in = random_tensor(2, 12, 6, rng);
    const auto target = random_tensor(4, 12, 6, rng);
    const auto mask = TimeMask::full(4, 12);
    ForwardTrace trace;
    const auto out = network_forward(spec, params, in, &trace);
    const auto r = network_backward(spec, params, trace, mse_loss(out, target, mask).grad);
    const double h = 1e-5;
    for (std::size_t k = 0; k < in.data.size(); k += 7) {
        const double saved = in.data[k];
        in.data[k] = saved + h;
        const double up = mse_loss(network_forward(spec, params, in), target, mask).loss;
        in.data[k] = saved - h;
        const double down = mse_loss(network_forward(spec, params, in), target, mask).loss;
        in.data[k] = saved;
        const double fd = (up - down) / (2 * h);
        EXPECT_NEAR(r.input_grad.data[k], fd, 1e-7 + 1e-5 * std::abs(fd));
    }
}

TEST(GradCheck, SmallInstancePassesAndSignBugFails) {
    const auto spec = NetworkSpec::standard(2);
    const auto params = random_params(spec, 20);
    std::mt19937_64 rng(21);
    const auto in = random_tensor(2, 16, 6, rng);
    const auto target = random_tensor(4, 16, 6, rng);
    const TimeMask mask{{15, 15, 14, 14}};
    const auto ok = grad_check(spec, params, in, target, mask);
    EXPECT_LT(ok.max_rel_error, 1e-5);
    EXPECT_EQ(ok.n_checked, params.count());
    EXPECT_EQ(ok.layer_max_rel_error.size(), 5u);

    GradCheckOptions bug;
    bug.inject_sign_bug = true;
    EXPECT_GT(grad_check(spec, params, in, target, mask, bug).max_rel_error, 1.0);
}

TEST(Init, UniformVarianceAndZeroBias) {
    const auto spec = NetworkSpec::standard(10);
    std::mt19937_64 rng(22);
    const auto p = init_params(spec, rng);
    for (std::size_t li = 1; li <= 2; ++li) {
        const auto& l = spec.layers[li];
        const double fan_in = static_cast<double>(l.in_ch * l.k_t * l.k_f);
        const double bound = 1.0 / std::sqrt(fan_in);
        double mean = 0.0, sq = 0.0;
        for (double w : p.layers[li].kernel) {
            EXPECT_LE(std::abs(w), bound);
            mean += w;
            sq += w * w;
        }
        const double n = static_cast<double>(p.layers[li].kernel.size());
        const double var = sq / n - (mean / n) * (mean / n);
        EXPECT_NEAR(var, 1.0 / (3.0 * fan_in), 0.1 / (3.0 * fan_in)) << "layer " << li;
        for (double b : p.layers[li].bias) EXPECT_EQ(b, 0.0);
    }
    std::mt19937_64 again(22);
    EXPECT_EQ(init_params(spec, again), p);
}

TEST(Adam, ScalarStepsByHand) {
    NetworkSpec spec;
    spec.m = 1;
    spec.layers.push_back({2, 2, 1, 1, 1, 1, false, false});
    Parameters p = Parameters::zeros_like(spec);
    p.layers[0].kernel = {1.0, -1.0, 0.5, 2.0};
    Gradients g = Parameters::zeros_like(spec);
    g.layers[0].kernel = {0.5, -2.0, 0.0, 1e-3};
    AdamState st = AdamState::for_spec(spec);
    const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};

    // Reference recurrence evaluated independently for each scalar.
    auto reference = [&](double x, const std::vector<double>& grads) {
        double m = 0.0, v = 0.0;
        for (std::size_t t = 1; t <= grads.size(); ++t) {
            const double gt = grads[t - 1];
            m = 0.9 * m + 0.1 * gt;
            v = 0.999 * v + 0.001 * gt * gt;
            const double mh = m / (1.0 - std::pow(0.9, static_cast<double>(t)));
            const double vh = v / (1.0 - std::pow(0.999, static_cast<double>(t)));
            x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        }
        return x;
    };

    adam_step(p, g, st, cfg);
    EXPECT_EQ(st.step, 1);
    // First step moves each nonzero-gradient weight by lr against the gradient sign.
    EXPECT_NEAR(p.layers[0].kernel[0], 1.0 - 0.01, 1e-9);
    EXPECT_NEAR(p.layers[0].kernel[1], -1.0 + 0.01, 1e-9);
    EXPECT_DOUBLE_EQ(p.layers[0].kernel[2], 0.5);

    Gradients g2 = g;
    g2.layers[0].kernel = {-0.25, 1.0, 3.0, 1e-3};
    adam_step(p, g2, st, cfg);
    const double init[] = {1.0, -1.0, 0.5, 2.0};
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_NEAR(p.layers[0].kernel[k], reference(init[k], {g.layers[0].kernel[k], g2.layers[0].kernel[k]}), 1e-14);
    }
}

TEST(Adam, NonFiniteGradientLeavesStateUntouched) {
    const auto spec = NetworkSpec::standard(2);
    auto p = random_params(spec, 23);
    const auto before = p;
    auto g = Parameters::zeros_like(spec);
    g.layers[3].bias[1] = std::numeric_limits<double>::infinity();
    auto st = AdamState::for_spec(spec);
    EXPECT_THROW(adam_step(p, g, st, {}), DivergenceError);
    EXPECT_EQ(p, before);
    EXPECT_EQ(st.step, 0);
    EXPECT_EQ(st.m, Parameters::zeros_like(spec));
}
