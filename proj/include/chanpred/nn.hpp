#pragma once

// Partially dilated 2D CNN over (channel, time, frequency) tensors with
// hand-written backpropagation and the ADAM optimizer.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace chanpred::nn {

/// Dense (channel, time, freq) tensor, frequency fastest.
struct Tensor3 {
    std::size_t channels = 0;
    std::size_t time = 0;
    std::size_t freq = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(std::size_t c, std::size_t t, std::size_t f, double fill = 0.0)
        : channels(c), time(t), freq(f), data(c * t * f, fill) {}

    double& at(std::size_t c, std::size_t t, std::size_t f) { return data[(c * time + t) * freq + f]; }
    double at(std::size_t c, std::size_t t, std::size_t f) const {
        return data[(c * time + t) * freq + f];
    }
    double* row(std::size_t c, std::size_t t) { return data.data() + (c * time + t) * freq; }
    const double* row(std::size_t c, std::size_t t) const { return data.data() + (c * time + t) * freq; }

    bool same_shape(const Tensor3& o) const {
        return channels == o.channels && time == o.time && freq == o.freq;
    }
};

struct LayerSpec {
    std::size_t in_ch = 0;
    std::size_t out_ch = 0;
    std::size_t k_t = 1;
    std::size_t k_f = 1;
    std::size_t d_t = 1;
    std::size_t d_f = 1;
    bool has_residual = false;
    bool has_activation = false;

    std::size_t kernel_size() const { return out_ch * in_ch * k_t * k_f; }
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    std::size_t m = 10;

    /// Four residual tanh layers with (4, 5) kernels and time dilations
    /// 1, 4, 16, 64 (channels 2 -> 6 -> 12 -> 12 -> 6), then a 1x1 head
    /// with 2m outputs.
    static NetworkSpec standard(std::size_t m = 10);

    /// Number of time steps an output can see, including its own.
    std::size_t receptive_field() const;
    std::size_t input_channels() const { return layers.front().in_ch; }
    std::size_t output_channels() const { return layers.back().out_ch; }

    /// Throws std::invalid_argument on inconsistent channel chaining.
    void validate() const;
};

/// Trainable tensors of one layer. Kernels are (out, in, k_t, k_f).
struct LayerParams {
    std::vector<double> kernel;
    std::vector<double> bias;
    std::vector<double> res_kernel;  // (out, in), empty without residual
    std::vector<double> res_bias;

    bool operator==(const LayerParams&) const = default;
};

/// Also used for gradients and ADAM moments, which share the same shapes.
struct Parameters {
    std::vector<LayerParams> layers;

    static Parameters zeros_like(const NetworkSpec& spec);
    std::size_t count() const;

    /// Visits every tensor in declaration order: per layer kernel, bias,
    /// residual kernel, residual bias.
    void for_each(const std::function<void(const std::string& name, std::span<double>)>& fn);
    void for_each(const std::function<void(const std::string& name, std::span<const double>)>& fn) const;

    bool operator==(const Parameters&) const = default;
};

using Gradients = Parameters;

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with fan_in = in_ch*k_t*k_f;
/// biases zero.
Parameters init_params(const NetworkSpec& spec, std::mt19937_64& rng);

/// Convolution with causal dilated taps along time (output t reads
/// t, t-d_t, ...; zeros before 0) and centred zero-padded taps along
/// frequency. Adds the bias.
Tensor3 dilated_conv2d(const Tensor3& input, const LayerSpec& layer, std::span<const double> kernel,
                       std::span<const double> bias);

/// tanh(conv) + residual 1x1 conv when configured, otherwise plain conv.
Tensor3 layer_forward(const Tensor3& input, const LayerSpec& layer, const LayerParams& params);

/// Activations kept for the backward pass.
struct ForwardTrace {
    std::vector<Tensor3> inputs;  // input of each layer
    std::vector<Tensor3> tanh_out;  // tanh(conv) of layers with activation
};

/// Channel pair (2k, 2k+1) of the result predicts the real/imaginary part
/// k+1 steps ahead of each input position.
Tensor3 network_forward(const NetworkSpec& spec, const Parameters& params, const Tensor3& input,
                        ForwardTrace* trace = nullptr);

/// Per channel, target positions t < valid_time[c] contribute to the loss.
struct TimeMask {
    std::vector<std::size_t> valid_time;

    static TimeMask full(std::size_t channels, std::size_t time) {
        return TimeMask{std::vector<std::size_t>(channels, time)};
    }
    std::size_t count(std::size_t freq) const;
};

struct LossResult {
    double loss = 0.0;  // mean over valid real entries
    Tensor3 grad;
};

/// Throws std::invalid_argument on shape mismatch or an empty mask.
LossResult mse_loss(const Tensor3& pred, const Tensor3& target, const TimeMask& mask);

struct BackwardResult {
    Gradients grads;
    Tensor3 input_grad;
};

BackwardResult network_backward(const NetworkSpec& spec, const Parameters& params,
                                const ForwardTrace& trace, const Tensor3& output_grad);

struct GradCheckOptions {
    double step = 1e-6;
    // Denominator floor for the relative error. Central differences of an O(1)
    // loss carry ~1e-9 absolute rounding noise at step 1e-6, so gradients far
    // below the floor are compared absolutely.
    double abs_floor = 1e-3;
    bool inject_sign_bug = false;  // flips one analytic tensor; harness self-test
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::vector<double> layer_max_rel_error;
    std::size_t n_checked = 0;
};

/// Compares every analytic parameter gradient of mse_loss against central
/// finite differences.
GradCheckReport grad_check(const NetworkSpec& spec, const Parameters& params, const Tensor3& input,
                           const Tensor3& target, const TimeMask& mask,
                           const GradCheckOptions& options = {});

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Parameters m;
    Parameters v;
    std::int64_t step = 0;

    static AdamState for_spec(const NetworkSpec& spec);
};

/// Bias-corrected ADAM update. Throws DivergenceError on non-finite gradients,
/// leaving params and state untouched.
void adam_step(Parameters& params, const Gradients& grads, AdamState& state, const AdamConfig& config);

}  // namespace chanpred::nn
