#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "chanpred/estimation.hpp"
#include "chanpred/nn.hpp"

namespace chanpred::train {

using cd = std::complex<double>;

/// A contiguous slice of one run: `time` consecutive estimates of `freq` bins.
struct Segment {
    std::size_t run = 0;
    std::size_t index = 0;  // position within the run
    std::size_t time = 0;
    std::size_t freq = 0;
    std::vector<cd> values;  // (time, freq)

    const cd& at(std::size_t t, std::size_t f) const { return values[t * freq + f]; }
};

struct DatasetSplit {
    std::vector<Segment> train;
    std::vector<Segment> val;
    std::vector<Segment> test;
};

struct SplitConfig {
    std::size_t segments_per_run = 8;
    std::size_t n_train = 6;
    std::size_t n_val = 1;
    std::size_t n_test = 1;
};

/// Cuts every run into equal contiguous segments, shuffles each run's
/// segments with a seeded PRNG and assigns them train/val/test in order.
DatasetSplit build_dataset(const est::EstimateSeries& series, std::uint64_t seed,
                           const SplitConfig& split = {});

/// Real and imaginary parts as channels 0 and 1.
nn::Tensor3 to_tensor(const Segment& segment);

struct Example {
    nn::Tensor3 input;
    nn::Tensor3 target;
    nn::TimeMask mask;
};

/// Target pair (2k, 2k+1) at t holds the value at t+k+1; positions running
/// past the segment end are masked.
Example make_targets(const Segment& segment, std::size_t m);

struct TrainConfig {
    double lr = 0.01;
    std::size_t epochs = 30;
    std::size_t m = 10;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // per real component, mean over the epoch's steps
    double val_loss = 0.0;    // per real component, after the epoch
};

struct TrainResult {
    nn::Parameters params;
    std::vector<EpochStats> history;
    std::int64_t steps = 0;
};

using TrainProgress = std::function<void(std::size_t epoch, std::size_t step, std::size_t n_steps, double loss)>;

/// Seeded init, then per epoch one ADAM step per training segment in
/// shuffled order. Throws DivergenceError on a non-finite loss.
TrainResult train(const nn::NetworkSpec& spec, const DatasetSplit& dataset, const TrainConfig& config,
                  const TrainProgress& progress = {});

/// Masked per-real-component loss averaged over segments.
double mean_loss(const nn::NetworkSpec& spec, const nn::Parameters& params,
                 std::span<const Segment> segments);

/// Per-complex-sample MSE of each horizon 1..m, pooled over segments.
std::vector<double> evaluate_mse_all(const nn::NetworkSpec& spec, const nn::Parameters& params,
                                     std::span<const Segment> segments);

/// Throws std::out_of_range unless 1 <= delta_t <= m.
double evaluate_mse(const nn::NetworkSpec& spec, const nn::Parameters& params,
                    std::span<const Segment> segments, std::size_t delta_t);

/// MSE of predicting value(t + delta_t) by value(t), same masking as
/// evaluate_mse.
double trivial_baseline_mse(std::span<const Segment> segments, std::size_t delta_t, std::size_t m);

struct DeltaRow {
    std::size_t delta_t = 0;
    double mse_train = 0.0;
    double mse_val = 0.0;
    double mse_test = 0.0;
    double mse_trivial = 0.0;  // on the test set
};

struct EvalReport {
    std::vector<DeltaRow> rows;  // per complex sample
    std::vector<EpochStats> history;
};

EvalReport evaluate_report(const nn::NetworkSpec& spec, const nn::Parameters& params,
                           const DatasetSplit& dataset, std::vector<EpochStats> history = {});

/// Predictions for t0 + 1 .. t0 + m from the estimates of one run up to t0,
/// using at most `window` past steps as context.
std::vector<std::vector<cd>> predict_ahead(const nn::NetworkSpec& spec, const nn::Parameters& params,
                                           const est::EstimateSeries& series, std::size_t run,
                                           std::size_t t0, std::size_t window = 512);

}  // namespace chanpred::train
