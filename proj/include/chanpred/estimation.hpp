#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "chanpred/sim.hpp"

namespace chanpred::est {

using cd = std::complex<double>;
using CVec = std::vector<cd>;

/// Constant-magnitude, random-phase probe. `time` is ifft(spectrum) and has
/// unit mean power.
struct TestSignal {
    sim::Signal time;
    CVec spectrum;
};

struct TransferEstimate {
    CVec values;  // N/2 decimated bins
    std::int64_t time_index = 0;
};

TestSignal gen_test_signal(std::size_t n, double sample_rate, sim::Rng& rng);

/// Elementwise FR / FS. Throws ValidationError on a zero divisor.
CVec raw_estimate(std::span<const cd> received_spectrum, std::span<const cd> sent_spectrum);

/// Windows the impulse response to [0, N/2), transforms back and keeps the
/// even bins.
TransferEstimate refine_estimate(std::span<const cd> raw, std::int64_t time_index = 0);

/// Estimates for n_runs x n_steps blocks of n_freq bins, row-major
/// (run, step, freq).
class EstimateSeries {
public:
    EstimateSeries() = default;
    EstimateSeries(std::size_t n_runs, std::size_t n_steps, std::size_t n_freq);

    std::size_t n_runs() const { return n_runs_; }
    std::size_t n_steps() const { return n_steps_; }
    std::size_t n_freq() const { return n_freq_; }

    std::span<cd> block(std::size_t run, std::size_t step);
    std::span<const cd> block(std::size_t run, std::size_t step) const;
    const cd& at(std::size_t run, std::size_t step, std::size_t f) const {
        return data_[(run * n_steps_ + step) * n_freq_ + f];
    }
    cd& at(std::size_t run, std::size_t step, std::size_t f) {
        return data_[(run * n_steps_ + step) * n_freq_ + f];
    }

    std::span<const cd> data() const { return data_; }
    std::span<cd> data() { return data_; }

    sim::SimConfig config;
    std::vector<std::uint64_t> seeds;

private:
    std::size_t n_runs_ = 0;
    std::size_t n_steps_ = 0;
    std::size_t n_freq_ = 0;
    std::vector<cd> data_;
};

/// Seed of run `run` derived from the base seed in the config.
std::uint64_t run_seed(std::uint64_t base_seed, std::size_t run);

/// One independent simulation run: per step, fresh probe, channel, estimate,
/// refine, advance. Writes n_steps x N/2 values into `out`.
void estimate_run(const sim::SimConfig& config, std::uint64_t seed, std::span<cd> out);

using ProgressFn = std::function<void(std::size_t run_done, std::size_t n_runs)>;

/// Runs are independent and may be spread over `threads` workers; the
/// output does not depend on the thread count.
EstimateSeries run_estimation_campaign(const sim::SimConfig& config, std::size_t n_runs,
                                       unsigned threads = 1, const ProgressFn& progress = {});

// CTFS container: "CTFS0001", u32 n_runs, n_steps, n_freq (little endian),
// then interleaved float64 (re, im) in (run, step, freq) order.
void write_ctfs(const std::filesystem::path& path, const EstimateSeries& series);
EstimateSeries read_ctfs(const std::filesystem::path& path);

}  // namespace chanpred::est
