#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "chanpred/estimation.hpp"
#include "chanpred/sim.hpp"

namespace chanpred::render {

using cd = std::complex<double>;
using Rgb = std::array<std::uint8_t, 3>;

/// Hue from phase (red at 0, cyan at pi), value from magnitude in [0, 1].
Rgb phase_color(double phase, double brightness);

struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<Rgb> pixels;  // row-major, row 0 at the top

    Image(std::size_t w, std::size_t h, Rgb fill = {255, 255, 255})
        : width(w), height(h), pixels(w * h, fill) {}
    Rgb& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }

    /// Binary P6 encoding.
    std::string to_ppm() const;
};

/// Time along x, subcarrier along y (f = 0 at the bottom); brightness is
/// |H| normalized to the run's maximum.
Image transfer_raster(const est::EstimateSeries& series, std::size_t run);

/// Transmitter, receiver and scatterers with each path coloured by its phase
/// offset.
Image scene_image(const sim::SimState& state, const sim::SimConfig& config, std::size_t size = 512);

inline constexpr double kDbFloor = -60.0;

/// 10 log10 |x|^2, floored at kDbFloor.
double power_db(cd x);

struct SpectraRow {
    std::size_t f = 0;
    double observed_t0 = 0.0;
    double observed_future = 0.0;
    double predicted = 0.0;
};

std::vector<SpectraRow> spectra_rows(std::span<const cd> observed_t0, std::span<const cd> observed_future,
                                     std::span<const cd> predicted);
std::string spectra_csv(std::span<const SpectraRow> rows);

/// Mean squared dB difference between two columns.
double db_mse(std::span<const SpectraRow> rows, double SpectraRow::*a, double SpectraRow::*b);

void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace chanpred::render
