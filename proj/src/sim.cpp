#include "chanpred/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "chanpred/error.hpp"
#include "chanpred/fft.hpp"

namespace chanpred::sim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid SimConfig: " + what);
}

double sample_truncated_exponential(double mean, double upper, Rng& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double mass = 1.0 - std::exp(-upper / mean);
    return -mean * std::log1p(-uni(rng) * mass);
}

}  // namespace

double norm(Vec2 v) { return std::hypot(v.x, v.y); }

void SimConfig::validate() const {
    require(f_carrier > 0.0, "f_carrier must be positive");
    require(c0 > 0.0, "c0 must be positive");
    require(n_scatterers > 0, "n_scatterers must be positive");
    require(n_moving <= n_scatterers, "n_moving exceeds n_scatterers");
    require(scatterer_vel_std >= 0.0, "scatterer_vel_std must be non-negative");
    require(receiver_speed >= 0.0, "receiver_speed must be non-negative");
    require(block_period > 0.0, "block_period must be positive");
    require(n_steps > 0, "n_steps must be positive");
    require(bandwidth > 0.0, "bandwidth must be positive");
    require(test_duration > 0.0, "test_duration must be positive");
    require(n_samples >= 4 && (n_samples & (n_samples - 1)) == 0,
            "n_samples must be a power of two >= 4");
    require(sinc_halfwidth > 0, "sinc_halfwidth must be positive");
    require(excess_delay_mean > 0.0, "excess_delay_mean must be positive");
    require(excess_delay_max > 0.0, "excess_delay_max must be positive");
    require(min_scatterer_distance >= 0.0, "min_scatterer_distance must be non-negative");
    require(placement_retries > 0, "placement_retries must be positive");
    require(norm(receiver_start - tx_position) > 0.0, "receiver starts on the transmitter");
}

double excess_delay_profile_mean(const SimConfig& config) {
    const double mu = config.excess_delay_mean;
    const double hi = config.excess_delay_max;
    const double tail = std::exp(-hi / mu);
    return mu - hi * tail / (1.0 - tail);
}

double excess_delay(const Scatterer& s, const ReceiverState& rx, Vec2 tx, double c0) {
    const double l = norm(s.position - tx) + norm(rx.position - s.position);
    return (l - norm(rx.position - tx)) / c0;
}

SimState init_simulation(const SimConfig& config, Rng& rng) {
    config.validate();

    SimState state;
    state.tx_position = config.tx_position;
    state.receiver.position = config.receiver_start;

    const Vec2 tx = config.tx_position;
    const Vec2 rx = config.receiver_start;
    const Vec2 axis = rx - tx;
    const double focal = norm(axis);
    const Vec2 centre = tx + 0.5 * axis;
    const double cos_rot = axis.x / focal;
    const double sin_rot = axis.y / focal;

    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);

    // Each scatterer lies on the ellipse with foci TX and RX whose string
    // length realizes the sampled excess delay.
    state.scatterers.resize(config.n_scatterers);
    for (std::size_t i = 0; i < config.n_scatterers; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < config.placement_retries && !placed; ++attempt) {
            const double dtau =
                sample_truncated_exponential(config.excess_delay_mean, config.excess_delay_max, rng);
            const double semi_major = 0.5 * (focal + config.c0 * dtau);
            const double half_focal = 0.5 * focal;
            const double semi_minor =
                std::sqrt(std::max(0.0, semi_major * semi_major - half_focal * half_focal));
            const double phi = angle(rng);
            const double ex = semi_major * std::cos(phi);
            const double ey = semi_minor * std::sin(phi);
            const Vec2 p{centre.x + cos_rot * ex - sin_rot * ey, centre.y + sin_rot * ex + cos_rot * ey};
            if (norm(p - tx) >= config.min_scatterer_distance &&
                norm(p - rx) >= config.min_scatterer_distance && norm(p - tx) > 0.0 &&
                norm(p - rx) > 0.0) {
                state.scatterers[i].position = p;
                placed = true;
            }
        }
        if (!placed) {
            throw ValidationError("scatterer " + std::to_string(i) +
                                  " could not be placed within the minimum distance after " +
                                  std::to_string(config.placement_retries) + " retries");
        }
    }

    std::normal_distribution<double> vel(0.0, config.scatterer_vel_std);
    for (std::size_t i = 0; i < config.n_moving; ++i) {
        const double vx = vel(rng);
        const double vy = vel(rng);
        state.scatterers[i].velocity = {vx, vy};
    }

    const double heading = angle(rng);
    state.receiver.velocity = {config.receiver_speed * std::cos(heading),
                               config.receiver_speed * std::sin(heading)};
    return state;
}

SimState init_simulation(const SimConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    return init_simulation(config, rng);
}

void advance(SimState& state, const SimConfig& config) {
    const double dt = config.block_period;
    for (auto& s : state.scatterers) s.position = s.position + dt * s.velocity;
    state.receiver.position = state.receiver.position + dt * state.receiver.velocity;
    ++state.step;
}

PathGeometry path_geometry(const Scatterer& scatterer, const ReceiverState& rx, Vec2 tx_position) {
    const Vec2 from_tx = scatterer.position - tx_position;
    const Vec2 from_rx = scatterer.position - rx.position;
    const double d_tx = norm(from_tx);
    const double d_rx = norm(from_rx);
    if (!(d_tx > 0.0) || !(d_rx > 0.0)) {
        throw ValidationError("degenerate path geometry: scatterer coincides with an endpoint");
    }
    // Unit vectors point toward the scatterer; the transmitter is static.
    const Vec2 u_tx = (1.0 / d_tx) * from_tx;
    const Vec2 u_rx = (1.0 / d_rx) * from_rx;
    return {d_tx + d_rx, dot(scatterer.velocity, u_tx) + dot(scatterer.velocity - rx.velocity, u_rx)};
}

PathParams path_params(double l, double dl_dt, const SimConfig& config) {
    if (!(l > 0.0)) throw ValidationError("path length must be positive");
    PathParams p;
    p.l = l;
    p.dl_dt = dl_dt;
    p.sigma = l / config.c0;
    double cycles = std::fmod(-l * config.f_carrier / config.c0, 1.0);
    if (cycles < 0.0) cycles += 1.0;
    if (cycles >= 1.0) cycles = 0.0;
    p.theta = cycles * kTwoPi;
    p.f_D = -dl_dt * config.f_carrier / config.c0;
    p.a = config.c0 / (4.0 * std::numbers::pi * config.f_carrier * l);
    return p;
}

ChannelSnapshot make_snapshot(const SimState& state, const SimConfig& config) {
    ChannelSnapshot snap;
    snap.paths.reserve(state.scatterers.size());
    double power = 0.0;
    for (const auto& s : state.scatterers) {
        const auto g = path_geometry(s, state.receiver, state.tx_position);
        snap.paths.push_back(path_params(g.l, g.dl_dt, config));
        power += snap.paths.back().a * snap.paths.back().a;
    }
    snap.norm = 1.0 / std::sqrt(power);
    return snap;
}

double shaping_kernel(double x, int halfwidth) {
    if (x == 0.0) return 1.0;
    if (std::abs(x) > static_cast<double>(halfwidth)) return 0.0;
    const double arg = std::numbers::pi * x / 2.0;
    return std::sin(arg) / arg;
}

namespace {

struct Tap {
    std::size_t shift;  // circular sample shift, in [0, N)
    double weight;
};

// Integer taps of the shaping kernel centred at fractional delay `delay`.
std::vector<Tap> delay_taps(double delay, std::size_t n, int halfwidth) {
    const auto lo = static_cast<long long>(std::ceil(delay - halfwidth));
    const auto hi = static_cast<long long>(std::floor(delay + halfwidth));
    if (hi >= static_cast<long long>(n / 2)) {
        throw ValidationError("path delay of " + std::to_string(delay) +
                              " samples puts kernel support beyond N/2 = " + std::to_string(n / 2));
    }
    std::vector<Tap> taps;
    taps.reserve(static_cast<std::size_t>(hi - lo + 1));
    const auto nn = static_cast<long long>(n);
    for (long long j = lo; j <= hi; ++j) {
        const double w = shaping_kernel(static_cast<double>(j) - delay, halfwidth);
        if (w == 0.0) continue;
        taps.push_back({static_cast<std::size_t>(((j % nn) + nn) % nn), w});
    }
    return taps;
}

}  // namespace

Signal propagate(const ChannelSnapshot& snapshot, const Signal& s, const SimConfig& config) {
    const std::size_t n = s.samples.size();
    const double fs = config.sample_rate();
    Signal out{std::vector<cd>(n, cd{}), fs};
    std::vector<cd> delayed(n);

    for (const auto& p : snapshot.paths) {
        const auto taps = delay_taps(p.sigma * fs, n, config.sinc_halfwidth);
        std::fill(delayed.begin(), delayed.end(), cd{});
        for (const auto& tap : taps) {
            // delayed[k] += w * s[k - shift] (circular)
            const std::size_t head = tap.shift;
            for (std::size_t k = 0; k < head; ++k) delayed[k] += tap.weight * s.samples[k + n - head];
            for (std::size_t k = head; k < n; ++k) delayed[k] += tap.weight * s.samples[k - head];
        }

        const cd gain = snapshot.norm * p.a * std::polar(1.0, p.theta);
        if (!config.intra_block_doppler || p.f_D == 0.0) {
            for (std::size_t k = 0; k < n; ++k) out.samples[k] += gain * delayed[k];
            continue;
        }
        const cd step = std::polar(1.0, kTwoPi * p.f_D / fs);
        cd rot = gain;
        for (std::size_t k = 0; k < n; ++k) {
            out.samples[k] += rot * delayed[k];
            rot *= step;
        }
    }
    return out;
}

void add_awgn(Signal& s, double snr_db, bool per_component, Rng& rng) {
    if (s.samples.empty()) return;
    double power = 0.0;
    for (const auto& v : s.samples) power += std::norm(v);
    power /= static_cast<double>(s.samples.size());
    const double noise_power = power * std::pow(10.0, -snr_db / 10.0);
    const double component_var = per_component ? noise_power : noise_power / 2.0;
    std::normal_distribution<double> gauss(0.0, std::sqrt(component_var));
    for (auto& v : s.samples) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        v += cd{re, im};
    }
}

Signal apply_channel(const ChannelSnapshot& snapshot, const Signal& s, const SimConfig& config,
                     Rng& rng) {
    Signal r = propagate(snapshot, s, config);
    if (config.add_noise) add_awgn(r, config.snr_db, config.noise_per_component, rng);
    return r;
}

std::vector<cd> true_transfer_function(const ChannelSnapshot& snapshot, const SimConfig& config) {
    const std::size_t n = config.n_samples;
    const double fs = config.sample_rate();
    std::vector<cd> impulse(n, cd{});
    for (const auto& p : snapshot.paths) {
        const cd gain = snapshot.norm * p.a * std::polar(1.0, p.theta);
        for (const auto& tap : delay_taps(p.sigma * fs, n, config.sinc_halfwidth)) {
            impulse[tap.shift] += gain * tap.weight;
        }
    }
    est::fft_inplace(impulse);
    return impulse;
}

}  // namespace chanpred::sim
