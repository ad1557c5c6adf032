#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "chanpred/estimation.hpp"
#include "chanpred/nn.hpp"
#include "chanpred/sim.hpp"
#include "chanpred/trainer.hpp"

namespace chanpred::io {

using nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

json to_json(const sim::SimConfig& c);
json to_json(const train::TrainConfig& c);
json to_json(const nn::NetworkSpec& spec);

/// Overlays the keys present in `j` onto `c`. Unknown keys raise ConfigError
/// so typos do not pass silently.
void update_from_json(sim::SimConfig& c, const json& j);
void update_from_json(train::TrainConfig& c, const json& j);
nn::NetworkSpec spec_from_json(const json& j);

/// Config file layout: {"sim": {...}, "train": {...}, "runs": 16}; every
/// section is optional.
struct PipelineConfig {
    sim::SimConfig sim;
    train::TrainConfig train;
    std::size_t runs = 16;
    std::uint64_t split_seed = 7;
};

PipelineConfig load_config(const std::filesystem::path& path);
json to_json(const PipelineConfig& c);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);

/// Sidecar next to a CTFS file: "<file>.json".
std::filesystem::path sidecar_path(const std::filesystem::path& data_path);
void write_series_metadata(const std::filesystem::path& data_path, const est::EstimateSeries& series,
                           const json& extra = json::object());
/// Restores config and seeds from the sidecar when it exists.
void read_series_metadata(const std::filesystem::path& data_path, est::EstimateSeries& series);

struct Checkpoint {
    nn::NetworkSpec spec;
    nn::Parameters params;
    std::int64_t step = 0;
    std::uint64_t seed = 0;
};

// "CPNN0001", u64 header length, JSON header, then every parameter tensor as
// little-endian float64 in declaration order.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

void write_report_csv(const std::filesystem::path& path, const train::EvalReport& report);
json report_to_json(const train::EvalReport& report);

}  // namespace chanpred::io
