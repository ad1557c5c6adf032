#include "chanpred/pipeline.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

#include "chanpred/render.hpp"

namespace chanpred::pipeline {

nn::GradCheckReport gradcheck_instance(std::uint64_t seed, bool inject_sign_bug) {
    constexpr std::size_t kTime = 40;
    constexpr std::size_t kFreq = 12;
    constexpr std::size_t kHorizon = 2;

    const auto spec = nn::NetworkSpec::standard(kHorizon);
    std::mt19937_64 rng(seed);
    nn::Parameters params = nn::init_params(spec, rng);
    // Non-zero biases so every bias path is exercised.
    std::uniform_real_distribution<double> small(-0.1, 0.1);
    for (auto& l : params.layers) {
        for (auto& b : l.bias) b = small(rng);
        for (auto& b : l.res_bias) b = small(rng);
    }

    std::normal_distribution<double> gauss(0.0, 1.0);
    nn::Tensor3 input(2, kTime, kFreq);
    for (auto& v : input.data) v = gauss(rng);
    nn::Tensor3 target(2 * kHorizon, kTime, kFreq);
    for (auto& v : target.data) v = gauss(rng);
    nn::TimeMask mask;
    for (std::size_t k = 0; k < kHorizon; ++k) {
        mask.valid_time.push_back(kTime - (k + 1));
        mask.valid_time.push_back(kTime - (k + 1));
    }

    nn::GradCheckOptions options;
    options.inject_sign_bug = inject_sign_bug;
    return nn::grad_check(spec, params, input, target, mask, options);
}

FadeTracking fade_tracking(const nn::NetworkSpec& spec, const nn::Parameters& params,
                           const est::EstimateSeries& series, std::span<const train::Segment> segments,
                           std::size_t delta_t, std::size_t cases_per_segment) {
    if (delta_t < 1 || delta_t > spec.m) throw std::out_of_range("delta_t outside [1, m]");
    FadeTracking out;
    for (const auto& seg : segments) {
        const std::size_t start = seg.index * seg.time;
        const std::size_t first = std::min(spec.receptive_field(), seg.time - delta_t - 1);
        const std::size_t last = seg.time - delta_t - 1;
        for (std::size_t c = 0; c < cases_per_segment; ++c) {
            const std::size_t local = first + (last - first) * c / std::max<std::size_t>(1, cases_per_segment - 1);
            const std::size_t t0 = start + local;
            // Context restricted to the segment itself, as during training.
            const auto pred = train::predict_ahead(spec, params, series, seg.run, t0, local + 1);
            const auto rows = render::spectra_rows(series.block(seg.run, t0), series.block(seg.run, t0 + delta_t),
                                                   pred[delta_t - 1]);
            out.predicted_vs_future_db +=
                render::db_mse(rows, &render::SpectraRow::predicted, &render::SpectraRow::observed_future);
            out.present_vs_future_db +=
                render::db_mse(rows, &render::SpectraRow::observed_t0, &render::SpectraRow::observed_future);
            ++out.n_cases;
        }
    }
    if (out.n_cases) {
        out.predicted_vs_future_db /= static_cast<double>(out.n_cases);
        out.present_vs_future_db /= static_cast<double>(out.n_cases);
    }
    return out;
}

}  // namespace chanpred::pipeline
