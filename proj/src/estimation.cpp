#include "chanpred/estimation.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>

#include "chanpred/error.hpp"
#include "chanpred/fft.hpp"

namespace chanpred::est {

TestSignal gen_test_signal(std::size_t n, double sample_rate, sim::Rng& rng) {
    if (!is_power_of_two(n)) throw std::invalid_argument("test signal length must be a power of two");
    std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
    // |X| = sqrt(N) gives unit mean power after the 1/N inverse transform.
    const double magnitude = std::sqrt(static_cast<double>(n));
    TestSignal ts;
    ts.spectrum.resize(n);
    for (auto& x : ts.spectrum) x = std::polar(magnitude, phase(rng));
    ts.time.samples = ifft(ts.spectrum);
    ts.time.sample_rate = sample_rate;
    return ts;
}

CVec raw_estimate(std::span<const cd> received_spectrum, std::span<const cd> sent_spectrum) {
    if (received_spectrum.size() != sent_spectrum.size()) {
        throw ValidationError("raw_estimate: spectrum lengths differ");
    }
    CVec out(received_spectrum.size());
    for (std::size_t f = 0; f < out.size(); ++f) {
        if (sent_spectrum[f] == cd{}) {
            throw ValidationError("raw_estimate: zero test-signal bin " + std::to_string(f));
        }
        out[f] = received_spectrum[f] / sent_spectrum[f];
    }
    return out;
}

TransferEstimate refine_estimate(std::span<const cd> raw, std::int64_t time_index) {
    const std::size_t n = raw.size();
    CVec impulse = ifft(raw);
    std::fill(impulse.begin() + static_cast<std::ptrdiff_t>(n / 2), impulse.end(), cd{});
    fft_inplace(impulse);
    TransferEstimate est;
    est.time_index = time_index;
    est.values.resize(n / 2);
    for (std::size_t f = 0; f < n / 2; ++f) est.values[f] = impulse[2 * f];
    return est;
}

EstimateSeries::EstimateSeries(std::size_t n_runs, std::size_t n_steps, std::size_t n_freq)
    : n_runs_(n_runs), n_steps_(n_steps), n_freq_(n_freq), data_(n_runs * n_steps * n_freq) {}

std::span<cd> EstimateSeries::block(std::size_t run, std::size_t step) {
    return std::span<cd>(data_).subspan((run * n_steps_ + step) * n_freq_, n_freq_);
}

std::span<const cd> EstimateSeries::block(std::size_t run, std::size_t step) const {
    return std::span<const cd>(data_).subspan((run * n_steps_ + step) * n_freq_, n_freq_);
}

std::uint64_t run_seed(std::uint64_t base_seed, std::size_t run) {
    // splitmix64 of (base, run) so neighbouring bases do not share runs
    std::uint64_t z = base_seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(run) + 1;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void estimate_run(const sim::SimConfig& config, std::uint64_t seed, std::span<cd> out) {
    const std::size_t n = config.n_samples;
    const std::size_t n_freq = n / 2;
    if (out.size() != config.n_steps * n_freq) {
        throw ValidationError("estimate_run: output buffer has wrong size");
    }
    sim::Rng rng(seed);
    sim::SimState state = sim::init_simulation(config, rng);
    const double fs = config.sample_rate();

    for (std::size_t step = 0; step < config.n_steps; ++step) {
        try {
            const TestSignal probe = gen_test_signal(n, fs, rng);
            const auto snapshot = sim::make_snapshot(state, config);
            const sim::Signal received = sim::apply_channel(snapshot, probe.time, config, rng);
            const CVec raw = raw_estimate(fft(received.samples), probe.spectrum);
            const TransferEstimate refined = refine_estimate(raw, static_cast<std::int64_t>(step));
            std::copy(refined.values.begin(), refined.values.end(),
                      out.begin() + static_cast<std::ptrdiff_t>(step * n_freq));
        } catch (const ValidationError& e) {
            throw ValidationError("step " + std::to_string(step) + ": " + e.what());
        }
        sim::advance(state, config);
    }
}

EstimateSeries run_estimation_campaign(const sim::SimConfig& config, std::size_t n_runs,
                                       unsigned threads, const ProgressFn& progress) {
    config.validate();
    EstimateSeries series(n_runs, config.n_steps, config.n_samples / 2);
    series.config = config;
    for (std::size_t r = 0; r < n_runs; ++r) series.seeds.push_back(run_seed(config.seed, r));

    auto run_one = [&](std::size_t r) {
        auto out = series.data().subspan(r * config.n_steps * series.n_freq(),
                                         config.n_steps * series.n_freq());
        try {
            estimate_run(config, series.seeds[r], out);
        } catch (const ValidationError& e) {
            throw ValidationError("run " + std::to_string(r) + ", " + e.what());
        }
    };

    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n_runs)));
    if (threads == 1) {
        for (std::size_t r = 0; r < n_runs; ++r) {
            run_one(r);
            if (progress) progress(r + 1, n_runs);
        }
        return series;
    }

    std::mutex mu;
    std::size_t next = 0;
    std::size_t done = 0;
    std::exception_ptr failure;
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    std::size_t r;
                    {
                        std::lock_guard lock(mu);
                        if (next >= n_runs || failure) return;
                        r = next++;
                    }
                    try {
                        run_one(r);
                    } catch (...) {
                        std::lock_guard lock(mu);
                        if (!failure) failure = std::current_exception();
                        return;
                    }
                    std::lock_guard lock(mu);
                    ++done;
                    if (progress) progress(done, n_runs);
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
    return series;
}

namespace {

constexpr std::array<char, 8> kCtfsMagic{'C', 'T', 'F', 'S', '0', '0', '0', '1'};

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(char* dst, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) dst[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

double get_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void write_ctfs(const std::filesystem::path& path, const EstimateSeries& series) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");

    std::string header(kCtfsMagic.begin(), kCtfsMagic.end());
    put_u32(header, static_cast<std::uint32_t>(series.n_runs()));
    put_u32(header, static_cast<std::uint32_t>(series.n_steps()));
    put_u32(header, static_cast<std::uint32_t>(series.n_freq()));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));

    std::vector<char> buf(series.n_freq() * 16);
    for (std::size_t r = 0; r < series.n_runs(); ++r) {
        for (std::size_t s = 0; s < series.n_steps(); ++s) {
            const auto row = series.block(r, s);
            for (std::size_t f = 0; f < row.size(); ++f) {
                put_f64(buf.data() + 16 * f, row[f].real());
                put_f64(buf.data() + 16 * f + 8, row[f].imag());
            }
            os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        }
    }
    if (!os) throw IoError("write failed for " + path.string());
}

EstimateSeries read_ctfs(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());

    std::array<unsigned char, 20> header{};
    is.read(reinterpret_cast<char*>(header.data()), header.size());
    if (is.gcount() != static_cast<std::streamsize>(header.size())) {
        throw ValidationError(path.string() + ": truncated CTFS header");
    }
    if (std::memcmp(header.data(), kCtfsMagic.data(), kCtfsMagic.size()) != 0) {
        throw ValidationError(path.string() + ": bad CTFS magic");
    }
    const std::size_t n_runs = get_u32(header.data() + 8);
    const std::size_t n_steps = get_u32(header.data() + 12);
    const std::size_t n_freq = get_u32(header.data() + 16);

    EstimateSeries series(n_runs, n_steps, n_freq);
    std::vector<unsigned char> buf(n_freq * 16);
    for (std::size_t r = 0; r < n_runs; ++r) {
        for (std::size_t s = 0; s < n_steps; ++s) {
            is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
            if (is.gcount() != static_cast<std::streamsize>(buf.size())) {
                throw ValidationError(path.string() + ": truncated CTFS payload");
            }
            auto row = series.block(r, s);
            for (std::size_t f = 0; f < n_freq; ++f) {
                row[f] = {get_f64(buf.data() + 16 * f), get_f64(buf.data() + 16 * f + 8)};
            }
        }
    }
    if (is.peek() != std::char_traits<char>::eof()) {
        throw ValidationError(path.string() + ": trailing bytes after CTFS payload");
    }
    return series;
}

}  // namespace chanpred::est
