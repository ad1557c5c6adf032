#include "chanpred/nn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "chanpred/error.hpp"

namespace chanpred::nn {

NetworkSpec NetworkSpec::standard(std::size_t m) {
    if (m == 0) throw std::invalid_argument("prediction horizon m must be at least 1");
    NetworkSpec spec;
    spec.m = m;
    const std::array<std::size_t, 5> channels{2, 6, 12, 12, 6};
    std::size_t dilation = 1;
    for (std::size_t l = 0; l < 4; ++l) {
        spec.layers.push_back({channels[l], channels[l + 1], 4, 5, dilation, 1, true, true});
        dilation *= 4;
    }
    spec.layers.push_back({6, 2 * m, 1, 1, 1, 1, false, false});
    return spec;
}

std::size_t NetworkSpec::receptive_field() const {
    std::size_t rf = 1;
    for (const auto& l : layers) rf += (l.k_t - 1) * l.d_t;
    return rf;
}

void NetworkSpec::validate() const {
    if (layers.empty()) throw std::invalid_argument("network has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.in_ch == 0 || l.out_ch == 0 || l.k_t == 0 || l.k_f == 0 || l.d_t == 0 || l.d_f == 0) {
            throw std::invalid_argument("layer " + std::to_string(i) + " has a zero dimension");
        }
        if (i > 0 && layers[i - 1].out_ch != l.in_ch) {
            throw std::invalid_argument("layer " + std::to_string(i) + " input channels do not chain");
        }
    }
    if (output_channels() != 2 * m) {
        throw std::invalid_argument("output channel count must equal 2m");
    }
}

Parameters Parameters::zeros_like(const NetworkSpec& spec) {
    Parameters p;
    for (const auto& l : spec.layers) {
        LayerParams lp;
        lp.kernel.assign(l.kernel_size(), 0.0);
        lp.bias.assign(l.out_ch, 0.0);
        if (l.has_residual) {
            lp.res_kernel.assign(l.out_ch * l.in_ch, 0.0);
            lp.res_bias.assign(l.out_ch, 0.0);
        }
        p.layers.push_back(std::move(lp));
    }
    return p;
}

std::size_t Parameters::count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.kernel.size() + l.bias.size() + l.res_kernel.size() + l.res_bias.size();
    return n;
}

void Parameters::for_each(const std::function<void(const std::string&, std::span<double>)>& fn) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string p = "layer" + std::to_string(i) + ".";
        fn(p + "kernel", layers[i].kernel);
        fn(p + "bias", layers[i].bias);
        if (!layers[i].res_kernel.empty()) {
            fn(p + "res_kernel", layers[i].res_kernel);
            fn(p + "res_bias", layers[i].res_bias);
        }
    }
}

void Parameters::for_each(
    const std::function<void(const std::string&, std::span<const double>)>& fn) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string p = "layer" + std::to_string(i) + ".";
        fn(p + "kernel", layers[i].kernel);
        fn(p + "bias", layers[i].bias);
        if (!layers[i].res_kernel.empty()) {
            fn(p + "res_kernel", layers[i].res_kernel);
            fn(p + "res_bias", layers[i].res_bias);
        }
    }
}

Parameters init_params(const NetworkSpec& spec, std::mt19937_64& rng) {
    spec.validate();
    Parameters p = Parameters::zeros_like(spec);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_ch * l.k_t * l.k_f));
        std::uniform_real_distribution<double> main(-bound, bound);
        for (auto& w : p.layers[i].kernel) w = main(rng);
        if (l.has_residual) {
            const double rbound = 1.0 / std::sqrt(static_cast<double>(l.in_ch));
            std::uniform_real_distribution<double> res(-rbound, rbound);
            for (auto& w : p.layers[i].res_kernel) w = res(rng);
        }
    }
    return p;
}

namespace {

// Frequency offsets of the kernel taps, centred on the output bin.
std::vector<long> freq_offsets(const LayerSpec& l) {
    std::vector<long> off(l.k_f);
    const long centre = static_cast<long>((l.k_f - 1) / 2);
    for (std::size_t kf = 0; kf < l.k_f; ++kf) {
        off[kf] = (static_cast<long>(kf) - centre) * static_cast<long>(l.d_f);
    }
    return off;
}

// dst[f] += sum_k w[k] * src[f + off[k]] over bins where the source index is
// in range. Taps are summed per bin in increasing k.
void accumulate_taps(double* __restrict dst, const double* __restrict src, const double* w,
                     const long* off, std::size_t k, std::size_t n) {
    const long nn = static_cast<long>(n);
    long lo = 0;
    long hi = nn;
    for (std::size_t j = 0; j < k; ++j) {
        lo = std::max(lo, -off[j]);
        hi = std::min(hi, nn - off[j]);
    }
    // Edge bins: some taps fall outside.
    auto edge = [&](long f) {
        double acc = dst[f];
        for (std::size_t j = 0; j < k; ++j) {
            const long s = f + off[j];
            if (s >= 0 && s < nn) acc += w[j] * src[s];
        }
        dst[f] = acc;
    };
    if (lo >= hi) {
        for (long f = 0; f < nn; ++f) edge(f);
        return;
    }
    for (long f = 0; f < lo; ++f) edge(f);
    if (k == 5) {
        const double w0 = w[0], w1 = w[1], w2 = w[2], w3 = w[3], w4 = w[4];
        const double* s0 = src + off[0];
        const double* s1 = src + off[1];
        const double* s2 = src + off[2];
        const double* s3 = src + off[3];
        const double* s4 = src + off[4];
#pragma omp simd
        for (long f = lo; f < hi; ++f) {
            dst[f] = dst[f] + w0 * s0[f] + w1 * s1[f] + w2 * s2[f] + w3 * s3[f] + w4 * s4[f];
        }
    } else if (k == 1) {
        const double w0 = w[0];
        const double* s0 = src + off[0];
#pragma omp simd
        for (long f = lo; f < hi; ++f) dst[f] += w0 * s0[f];
    } else {
        for (long f = lo; f < hi; ++f) {
            double acc = dst[f];
            for (std::size_t j = 0; j < k; ++j) acc += w[j] * src[f + off[j]];
            dst[f] = acc;
        }
    }
    for (long f = hi; f < nn; ++f) edge(f);
}

double dot_shifted(const double* a, const double* b, long off, std::size_t n) {
    // sum_f a[f] * b[f + off] over valid f
    const long nn = static_cast<long>(n);
    const long lo = std::max(0L, -off);
    const long hi = std::min(nn, nn - off);
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (long f = lo; f < hi; ++f) s += a[f] * b[f + off];
    return s;
}

void check_input(const Tensor3& input, const LayerSpec& layer, std::span<const double> kernel,
                 std::span<const double> bias) {
    if (input.channels != layer.in_ch) {
        throw std::invalid_argument("conv input has " + std::to_string(input.channels) +
                                    " channels, layer expects " + std::to_string(layer.in_ch));
    }
    if (kernel.size() != layer.kernel_size() || bias.size() != layer.out_ch) {
        throw std::invalid_argument("conv parameter shapes do not match the layer");
    }
}

LayerSpec residual_spec(const LayerSpec& l) { return {l.in_ch, l.out_ch, 1, 1, 1, 1, false, false}; }

struct ConvGrads {
    std::span<double> kernel;
    std::span<double> bias;
};

// Accumulates kernel/bias gradients and (optionally) the input gradient of a
// convolution given the gradient w.r.t. its output.
void conv_backward(const Tensor3& input, const LayerSpec& l, std::span<const double> kernel,
                   const Tensor3& out_grad, ConvGrads grads, Tensor3* input_grad) {
    const std::size_t T = input.time;
    const std::size_t F = input.freq;
    const auto off = freq_offsets(l);
    std::vector<long> neg_off(off.size());
    for (std::size_t j = 0; j < off.size(); ++j) neg_off[j] = -off[j];

    for (std::size_t o = 0; o < l.out_ch; ++o) {
        double s = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double* g = out_grad.row(o, t);
#pragma omp simd reduction(+ : s)
            for (std::size_t f = 0; f < F; ++f) s += g[f];
        }
        grads.bias[o] += s;
    }

    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t o = 0; o < l.out_ch; ++o) {
            const double* g = out_grad.row(o, t);
            for (std::size_t i = 0; i < l.in_ch; ++i) {
                for (std::size_t kt = 0; kt < l.k_t; ++kt) {
                    if (t < kt * l.d_t) break;
                    const double* src = input.row(i, t - kt * l.d_t);
                    double* dw = &grads.kernel[((o * l.in_ch + i) * l.k_t + kt) * l.k_f];
                    for (std::size_t kf = 0; kf < l.k_f; ++kf) dw[kf] += dot_shifted(g, src, off[kf], F);
                }
            }
        }
    }

    if (!input_grad) return;
    // Transposed convolution: input position s collects from outputs s + kt*d_t.
    for (std::size_t s = 0; s < T; ++s) {
        for (std::size_t i = 0; i < l.in_ch; ++i) {
            double* dst = input_grad->row(i, s);
            for (std::size_t o = 0; o < l.out_ch; ++o) {
                for (std::size_t kt = 0; kt < l.k_t; ++kt) {
                    const std::size_t t = s + kt * l.d_t;
                    if (t >= T) break;
                    const double* w = &kernel[((o * l.in_ch + i) * l.k_t + kt) * l.k_f];
                    accumulate_taps(dst, out_grad.row(o, t), w, neg_off.data(), l.k_f, F);
                }
            }
        }
    }
}

}  // namespace

Tensor3 dilated_conv2d(const Tensor3& input, const LayerSpec& layer, std::span<const double> kernel,
                       std::span<const double> bias) {
    check_input(input, layer, kernel, bias);
    const std::size_t T = input.time;
    const std::size_t F = input.freq;
    Tensor3 out(layer.out_ch, T, F);
    const auto off = freq_offsets(layer);

    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t o = 0; o < layer.out_ch; ++o) {
            double* dst = out.row(o, t);
            std::fill(dst, dst + F, bias[o]);
            for (std::size_t i = 0; i < layer.in_ch; ++i) {
                for (std::size_t kt = 0; kt < layer.k_t; ++kt) {
                    if (t < kt * layer.d_t) break;
                    const double* w = &kernel[((o * layer.in_ch + i) * layer.k_t + kt) * layer.k_f];
                    accumulate_taps(dst, input.row(i, t - kt * layer.d_t), w, off.data(), layer.k_f, F);
                }
            }
        }
    }
    return out;
}

namespace {

Tensor3 layer_forward_impl(const Tensor3& input, const LayerSpec& layer, const LayerParams& params,
                           Tensor3* tanh_out) {
    Tensor3 out = dilated_conv2d(input, layer, params.kernel, params.bias);
    if (!layer.has_activation) {
        if (layer.has_residual) {
            const Tensor3 res = dilated_conv2d(input, residual_spec(layer), params.res_kernel, params.res_bias);
            for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += res.data[k];
        }
        return out;
    }
    for (auto& v : out.data) v = std::tanh(v);
    if (tanh_out) *tanh_out = out;
    if (layer.has_residual) {
        const Tensor3 res = dilated_conv2d(input, residual_spec(layer), params.res_kernel, params.res_bias);
        for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += res.data[k];
    }
    return out;
}

}  // namespace

Tensor3 layer_forward(const Tensor3& input, const LayerSpec& layer, const LayerParams& params) {
    return layer_forward_impl(input, layer, params, nullptr);
}

Tensor3 network_forward(const NetworkSpec& spec, const Parameters& params, const Tensor3& input,
                        ForwardTrace* trace) {
    if (input.channels != spec.input_channels()) {
        throw std::invalid_argument("network input must have " + std::to_string(spec.input_channels()) +
                                    " channels");
    }
    if (params.layers.size() != spec.layers.size()) {
        throw std::invalid_argument("parameters do not match the network spec");
    }
    if (trace) {
        trace->inputs.assign(spec.layers.size(), Tensor3{});
        trace->tanh_out.assign(spec.layers.size(), Tensor3{});
    }
    Tensor3 x = input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        Tensor3 y = layer_forward_impl(x, spec.layers[i], params.layers[i],
                                       trace ? &trace->tanh_out[i] : nullptr);
        if (trace) {
            trace->inputs[i] = std::move(x);
        }
        x = std::move(y);
    }
    return x;
}

std::size_t TimeMask::count(std::size_t freq) const {
    std::size_t n = 0;
    for (auto v : valid_time) n += v * freq;
    return n;
}

LossResult mse_loss(const Tensor3& pred, const Tensor3& target, const TimeMask& mask) {
    if (!pred.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
    if (mask.valid_time.size() != pred.channels) throw std::invalid_argument("mse_loss: mask channel mismatch");
    const std::size_t count = mask.count(pred.freq);
    if (count == 0) throw std::invalid_argument("mse_loss: empty mask");

    LossResult r;
    r.grad = Tensor3(pred.channels, pred.time, pred.freq);
    const double scale = 1.0 / static_cast<double>(count);
    double sum = 0.0;
    for (std::size_t c = 0; c < pred.channels; ++c) {
        const std::size_t valid = std::min(mask.valid_time[c], pred.time);
        for (std::size_t t = 0; t < valid; ++t) {
            const double* p = pred.row(c, t);
            const double* y = target.row(c, t);
            double* g = r.grad.row(c, t);
            for (std::size_t f = 0; f < pred.freq; ++f) {
                const double d = p[f] - y[f];
                sum += d * d;
                g[f] = 2.0 * d * scale;
            }
        }
    }
    r.loss = sum * scale;
    return r;
}

BackwardResult network_backward(const NetworkSpec& spec, const Parameters& params,
                                const ForwardTrace& trace, const Tensor3& output_grad) {
    if (trace.inputs.size() != spec.layers.size()) {
        throw std::invalid_argument("network_backward: forward trace is missing");
    }
    BackwardResult result{Parameters::zeros_like(spec), {}};
    Tensor3 g = output_grad;

    for (std::size_t li = spec.layers.size(); li-- > 0;) {
        const auto& l = spec.layers[li];
        const auto& in = trace.inputs[li];
        const auto& lp = params.layers[li];
        auto& gp = result.grads.layers[li];
        if (g.channels != l.out_ch || g.time != in.time || g.freq != in.freq) {
            throw std::invalid_argument("network_backward: gradient shape mismatch at layer " +
                                        std::to_string(li));
        }

        Tensor3 g_in(in.channels, in.time, in.freq);
        if (l.has_residual) {
            conv_backward(in, residual_spec(l), lp.res_kernel, g, {gp.res_kernel, gp.res_bias}, &g_in);
        }
        if (l.has_activation) {
            const auto& y = trace.tanh_out[li];
            for (std::size_t k = 0; k < g.data.size(); ++k) g.data[k] *= 1.0 - y.data[k] * y.data[k];
        }
        conv_backward(in, l, lp.kernel, g, {gp.kernel, gp.bias}, &g_in);
        g = std::move(g_in);
    }
    result.input_grad = std::move(g);
    return result;
}

GradCheckReport grad_check(const NetworkSpec& spec, const Parameters& params, const Tensor3& input,
                           const Tensor3& target, const TimeMask& mask, const GradCheckOptions& options) {
    ForwardTrace trace;
    const Tensor3 out = network_forward(spec, params, input, &trace);
    const LossResult base = mse_loss(out, target, mask);
    Gradients analytic = network_backward(spec, params, trace, base.grad).grads;
    if (options.inject_sign_bug) {
        for (auto& w : analytic.layers.front().kernel) w = -w;
    }

    // Layers before the perturbed one are unchanged; restart from its cached input.
    auto loss_at = [&](const Parameters& p, std::size_t first) {
        Tensor3 x = layer_forward(trace.inputs[first], spec.layers[first], p.layers[first]);
        for (std::size_t l = first + 1; l < spec.layers.size(); ++l) x = layer_forward(x, spec.layers[l], p.layers[l]);
        return mse_loss(x, target, mask).loss;
    };

    GradCheckReport report;
    report.layer_max_rel_error.assign(spec.layers.size(), 0.0);
    Parameters probe = params;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        auto tensors = {std::pair{&probe.layers[li].kernel, &analytic.layers[li].kernel},
                        std::pair{&probe.layers[li].bias, &analytic.layers[li].bias},
                        std::pair{&probe.layers[li].res_kernel, &analytic.layers[li].res_kernel},
                        std::pair{&probe.layers[li].res_bias, &analytic.layers[li].res_bias}};
        for (auto [values, grads] : tensors) {
            for (std::size_t k = 0; k < values->size(); ++k) {
                const double saved = (*values)[k];
                (*values)[k] = saved + options.step;
                const double up = loss_at(probe, li);
                (*values)[k] = saved - options.step;
                const double down = loss_at(probe, li);
                (*values)[k] = saved;
                const double numeric = (up - down) / (2.0 * options.step);
                const double a = (*grads)[k];
                const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
                const double rel = std::abs(a - numeric) / denom;
                report.layer_max_rel_error[li] = std::max(report.layer_max_rel_error[li], rel);
                ++report.n_checked;
            }
        }
        report.max_rel_error = std::max(report.max_rel_error, report.layer_max_rel_error[li]);
    }
    return report;
}

AdamState AdamState::for_spec(const NetworkSpec& spec) {
    return {Parameters::zeros_like(spec), Parameters::zeros_like(spec), 0};
}

void adam_step(Parameters& params, const Gradients& grads, AdamState& state, const AdamConfig& config) {
    bool finite = true;
    grads.for_each([&](const std::string&, std::span<const double> g) {
        for (double v : g) finite = finite && std::isfinite(v);
    });
    if (!finite) throw DivergenceError("non-finite gradient in ADAM step " + std::to_string(state.step + 1));

    ++state.step;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));

    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                          std::vector<double>& v) {
            for (std::size_t k = 0; k < p.size(); ++k) {
                m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
                v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
                const double m_hat = m[k] / c1;
                const double v_hat = v[k] / c2;
                p[k] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
            }
        };
        auto& p = params.layers[li];
        const auto& g = grads.layers[li];
        auto& m = state.m.layers[li];
        auto& v = state.v.layers[li];
        update(p.kernel, g.kernel, m.kernel, v.kernel);
        update(p.bias, g.bias, m.bias, v.bias);
        update(p.res_kernel, g.res_kernel, m.res_kernel, v.res_kernel);
        update(p.res_bias, g.res_bias, m.res_bias, v.res_bias);
    }
}

}  // namespace chanpred::nn
