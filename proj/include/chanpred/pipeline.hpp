#pragma once

// Pieces shared by the CLI and the acceptance suite.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "chanpred/estimation.hpp"
#include "chanpred/nn.hpp"
#include "chanpred/trainer.hpp"

namespace chanpred::pipeline {

inline constexpr double kGradCheckGate = 1e-5;

/// Fixed small instance: T=40, F=12, m=2, parameters, input and target all
/// drawn from `seed`.
nn::GradCheckReport gradcheck_instance(std::uint64_t seed, bool inject_sign_bug = false);

struct FadeTracking {
    double predicted_vs_future_db = 0.0;  // dB-domain MSE
    double present_vs_future_db = 0.0;
    std::size_t n_cases = 0;
};

/// Averages the dB-domain spectrum errors over every test segment of the
/// split, at `cases_per_segment` evenly spaced origins past the receptive
/// field.
FadeTracking fade_tracking(const nn::NetworkSpec& spec, const nn::Parameters& params,
                           const est::EstimateSeries& series, std::span<const train::Segment> segments,
                           std::size_t delta_t, std::size_t cases_per_segment = 4);

}  // namespace chanpred::pipeline
