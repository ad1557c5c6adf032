#include "chanpred/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "chanpred/error.hpp"

namespace chanpred::render {

Rgb phase_color(double phase, double brightness) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double h = std::fmod(phase, two_pi);
    if (h < 0.0) h += two_pi;
    h = h / two_pi * 6.0;  // sector in [0, 6)
    const double v = std::clamp(brightness, 0.0, 1.0);
    const int sector = static_cast<int>(h) % 6;
    const double frac = h - std::floor(h);
    const double p = 0.0;
    const double q = v * (1.0 - frac);
    const double t = v * frac;
    double r = 0, g = 0, b = 0;
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
    auto byte = [](double x) { return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)); };
    return {byte(r), byte(g), byte(b)};
}

std::string Image::to_ppm() const {
    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.reserve(out.size() + pixels.size() * 3);
    for (const auto& px : pixels) {
        out.push_back(static_cast<char>(px[0]));
        out.push_back(static_cast<char>(px[1]));
        out.push_back(static_cast<char>(px[2]));
    }
    return out;
}

Image transfer_raster(const est::EstimateSeries& series, std::size_t run) {
    if (run >= series.n_runs()) throw ValidationError("run index out of range");
    double peak = 0.0;
    for (std::size_t t = 0; t < series.n_steps(); ++t) {
        for (const auto& v : series.block(run, t)) peak = std::max(peak, std::abs(v));
    }
    Image img(series.n_steps(), series.n_freq(), {0, 0, 0});
    for (std::size_t t = 0; t < series.n_steps(); ++t) {
        const auto row = series.block(run, t);
        for (std::size_t f = 0; f < series.n_freq(); ++f) {
            const double mag = peak > 0.0 ? std::abs(row[f]) / peak : 0.0;
            img.at(t, series.n_freq() - 1 - f) = phase_color(std::arg(row[f]), mag);
        }
    }
    return img;
}

Image scene_image(const sim::SimState& state, const sim::SimConfig& config, std::size_t size) {
    Image img(size, size);
    double lo_x = std::min(state.tx_position.x, state.receiver.position.x);
    double hi_x = std::max(state.tx_position.x, state.receiver.position.x);
    double lo_y = std::min(state.tx_position.y, state.receiver.position.y);
    double hi_y = std::max(state.tx_position.y, state.receiver.position.y);
    for (const auto& s : state.scatterers) {
        lo_x = std::min(lo_x, s.position.x);
        hi_x = std::max(hi_x, s.position.x);
        lo_y = std::min(lo_y, s.position.y);
        hi_y = std::max(hi_y, s.position.y);
    }
    const double span = std::max(hi_x - lo_x, hi_y - lo_y) * 1.05 + 1e-9;
    const double cx = 0.5 * (lo_x + hi_x);
    const double cy = 0.5 * (lo_y + hi_y);
    auto to_px = [&](sim::Vec2 p) {
        const double u = (p.x - cx) / span + 0.5;
        const double v = 0.5 - (p.y - cy) / span;
        return std::pair<long, long>{std::lround(u * static_cast<double>(size - 1)),
                                     std::lround(v * static_cast<double>(size - 1))};
    };
    auto plot = [&](long x, long y, Rgb c) {
        if (x >= 0 && y >= 0 && x < static_cast<long>(size) && y < static_cast<long>(size)) {
            img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = c;
        }
    };
    auto line = [&](sim::Vec2 a, sim::Vec2 b, Rgb c) {
        auto [x0, y0] = to_px(a);
        auto [x1, y1] = to_px(b);
        const long dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
        const long dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
        long err = dx + dy;
        for (;;) {
            plot(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const long e2 = 2 * err;
            if (e2 >= dy) { err += dy; x0 += sx; }
            if (e2 <= dx) { err += dx; y0 += sy; }
        }
    };
    auto dot = [&](sim::Vec2 p, long radius, Rgb c) {
        auto [x, y] = to_px(p);
        for (long j = -radius; j <= radius; ++j) {
            for (long i = -radius; i <= radius; ++i) {
                if (i * i + j * j <= radius * radius) plot(x + i, y + j, c);
            }
        }
    };

    std::vector<Rgb> colors;
    for (const auto& s : state.scatterers) {
        const auto g = sim::path_geometry(s, state.receiver, state.tx_position);
        const auto p = sim::path_params(g.l, g.dl_dt, config);
        // Washed-out path lines so the markers stay readable.
        const Rgb c = phase_color(p.theta, 1.0);
        colors.push_back(c);
        const Rgb faint{static_cast<std::uint8_t>(255 - (255 - c[0]) / 4),
                        static_cast<std::uint8_t>(255 - (255 - c[1]) / 4),
                        static_cast<std::uint8_t>(255 - (255 - c[2]) / 4)};
        line(state.tx_position, s.position, faint);
        line(s.position, state.receiver.position, faint);
    }
    for (std::size_t i = 0; i < state.scatterers.size(); ++i) dot(state.scatterers[i].position, 2, colors[i]);
    dot(state.tx_position, 6, {220, 0, 0});
    dot(state.receiver.position, 6, {0, 0, 0});
    return img;
}

double power_db(cd x) {
    const double p = std::norm(x);
    if (p <= 0.0) return kDbFloor;
    return std::max(kDbFloor, 10.0 * std::log10(p));
}

std::vector<SpectraRow> spectra_rows(std::span<const cd> observed_t0, std::span<const cd> observed_future,
                                     std::span<const cd> predicted) {
    if (observed_t0.size() != observed_future.size() || observed_t0.size() != predicted.size()) {
        throw ValidationError("spectra columns differ in length");
    }
    std::vector<SpectraRow> rows(observed_t0.size());
    for (std::size_t f = 0; f < rows.size(); ++f) {
        rows[f] = {f, power_db(observed_t0[f]), power_db(observed_future[f]), power_db(predicted[f])};
    }
    return rows;
}

std::string spectra_csv(std::span<const SpectraRow> rows) {
    std::ostringstream os;
    os << "f,observed_t0,observed_t0_plus_dt,predicted\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f\n", r.f, r.observed_t0, r.observed_future, r.predicted);
        os << buf;
    }
    return os.str();
}

double db_mse(std::span<const SpectraRow> rows, double SpectraRow::*a, double SpectraRow::*b) {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) {
        const double d = r.*a - r.*b;
        s += d * d;
    }
    return s / static_cast<double>(rows.size());
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace chanpred::render
