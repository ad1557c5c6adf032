#pragma once

// Time-variant multipath channel: point scatterers moving in the plane
// between a fixed transmitter and a moving receiver, applied blockwise to
// complex baseband signals with windowed-sinc fractional delays and AWGN.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace chanpred::sim {

using cd = std::complex<double>;
using Rng = std::mt19937_64;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend constexpr bool operator==(Vec2, Vec2) = default;
};

double norm(Vec2 v);
constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

/// All physical parameters of the simulation, in SI base units.
struct SimConfig {
    double f_carrier = 9.0e8;
    double c0 = 299792458.0;
    std::size_t n_scatterers = 256;
    std::size_t n_moving = 64;
    double scatterer_vel_std = 10.0;
    double receiver_speed = 10.0;
    Vec2 receiver_start{400.0, 0.0};
    Vec2 tx_position{0.0, 0.0};
    double block_period = 500e-6;
    std::size_t n_steps = 4096;
    double bandwidth = 12.8e6;
    double test_duration = 20e-6;
    std::size_t n_samples = 512;
    double snr_db = 12.0;
    int sinc_halfwidth = 8;
    std::uint64_t seed = 1;

    // Typical-urban placement: excess delay ~ Exponential(mean), truncated.
    double excess_delay_mean = 1e-6;
    double excess_delay_max = 7e-6;
    double min_scatterer_distance = 1.0;
    int placement_retries = 1000;

    // Switches used by verification runs. With add_noise=false the channel
    // output is exact; with intra_block_doppler=false the Doppler phase is
    // frozen at its block-start value, making each block exactly LTI.
    bool add_noise = true;
    bool intra_block_doppler = true;

    // SNR reference: when set, each of the real and imaginary noise parts
    // has variance P_rx * 10^(-snr_db/10) (i.i.d. N(0, sigma^2) per real
    // component); otherwise that value is the total complex noise power.
    bool noise_per_component = true;

    double sample_rate() const { return static_cast<double>(n_samples) / test_duration; }

    /// Throws ConfigError on violated invariants.
    void validate() const;
};

struct Scatterer {
    Vec2 position;
    Vec2 velocity;
};

struct ReceiverState {
    Vec2 position;
    Vec2 velocity;
};

struct SimState {
    std::vector<Scatterer> scatterers;
    ReceiverState receiver;
    Vec2 tx_position;
    std::int64_t step = 0;
};

struct PathGeometry {
    double l = 0.0;
    double dl_dt = 0.0;
};

struct PathParams {
    double l = 0.0;
    double dl_dt = 0.0;
    double sigma = 0.0;  // delay, s
    double theta = 0.0;  // phase offset in [0, 2*pi)
    double f_D = 0.0;    // Doppler, Hz
    double a = 0.0;      // free-space amplitude
};

struct ChannelSnapshot {
    std::vector<PathParams> paths;
    double norm = 1.0;  // 1 / sqrt(sum a_i^2)
};

struct Signal {
    std::vector<cd> samples;
    double sample_rate = 0.0;
};

/// Places scatterers and the receiver. Throws ValidationError when the
/// minimum-distance constraint cannot be met within the retry budget.
SimState init_simulation(const SimConfig& config, Rng& rng);
SimState init_simulation(const SimConfig& config, std::uint64_t seed);

/// Excess path delay (s) of a scatterer relative to the direct TX-RX distance.
double excess_delay(const Scatterer& s, const ReceiverState& rx, Vec2 tx, double c0);

/// Analytic mean of the truncated-exponential excess-delay distribution.
double excess_delay_profile_mean(const SimConfig& config);

/// Moves every body by velocity * block_period and increments the step.
void advance(SimState& state, const SimConfig& config);

/// Reflected path length and its exact time derivative for constant velocities.
PathGeometry path_geometry(const Scatterer& scatterer, const ReceiverState& rx, Vec2 tx_position);

PathParams path_params(double l, double dl_dt, const SimConfig& config);

ChannelSnapshot make_snapshot(const SimState& state, const SimConfig& config);

/// sin(pi x/2)/(pi x/2) on |x| <= halfwidth, zero outside.
double shaping_kernel(double x, int halfwidth = 8);

/// Noiseless channel output: per path, circular convolution with the shifted
/// shaping kernel, scaled by amplitude, static phase and Doppler rotation.
/// Throws ValidationError when a path's kernel support reaches N/2 samples.
Signal propagate(const ChannelSnapshot& snapshot, const Signal& s, const SimConfig& config);

/// Adds circularly symmetric complex Gaussian noise scaled to 10^(-snr_db/10)
/// times the mean power of `s`, per real component or in total.
void add_awgn(Signal& s, double snr_db, bool per_component, Rng& rng);

/// propagate() followed by add_awgn() when config.add_noise is set.
Signal apply_channel(const ChannelSnapshot& snapshot, const Signal& s, const SimConfig& config,
                     Rng& rng);

/// DFT of the effective block impulse response at block start (tau = 0).
std::vector<cd> true_transfer_function(const ChannelSnapshot& snapshot, const SimConfig& config);

}  // namespace chanpred::sim
