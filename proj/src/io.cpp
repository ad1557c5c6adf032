#include "chanpred/io.hpp"

#include <array>
#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "chanpred/error.hpp"

namespace chanpred::io {

namespace {

json vec(sim::Vec2 v) { return json::array({v.x, v.y}); }

sim::Vec2 vec_from(const json& j, const std::string& key) {
    if (!j.is_array() || j.size() != 2) throw ConfigError(key + " must be a [x, y] array");
    return {j[0].get<double>(), j[1].get<double>()};
}

template <typename T>
void take(const json& j, const std::string& key, T& dst) {
    try {
        dst = j.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

}  // namespace

json to_json(const sim::SimConfig& c) {
    return {{"f_carrier", c.f_carrier},
            {"c0", c.c0},
            {"n_scatterers", c.n_scatterers},
            {"n_moving", c.n_moving},
            {"scatterer_vel_std", c.scatterer_vel_std},
            {"receiver_speed", c.receiver_speed},
            {"receiver_start", vec(c.receiver_start)},
            {"tx_position", vec(c.tx_position)},
            {"block_period", c.block_period},
            {"n_steps", c.n_steps},
            {"bandwidth", c.bandwidth},
            {"test_duration", c.test_duration},
            {"n_samples", c.n_samples},
            {"snr_db", c.snr_db},
            {"sinc_halfwidth", c.sinc_halfwidth},
            {"seed", c.seed},
            {"excess_delay_mean", c.excess_delay_mean},
            {"excess_delay_max", c.excess_delay_max},
            {"min_scatterer_distance", c.min_scatterer_distance},
            {"placement_retries", c.placement_retries},
            {"add_noise", c.add_noise},
            {"intra_block_doppler", c.intra_block_doppler},
            {"noise_per_component", c.noise_per_component}};
}

void update_from_json(sim::SimConfig& c, const json& j) {
    if (!j.is_object()) throw ConfigError("sim config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        if (key == "f_carrier") take(v, key, c.f_carrier);
        else if (key == "c0") take(v, key, c.c0);
        else if (key == "n_scatterers") take(v, key, c.n_scatterers);
        else if (key == "n_moving") take(v, key, c.n_moving);
        else if (key == "scatterer_vel_std") take(v, key, c.scatterer_vel_std);
        else if (key == "receiver_speed") take(v, key, c.receiver_speed);
        else if (key == "receiver_start") c.receiver_start = vec_from(v, key);
        else if (key == "tx_position") c.tx_position = vec_from(v, key);
        else if (key == "block_period") take(v, key, c.block_period);
        else if (key == "n_steps") take(v, key, c.n_steps);
        else if (key == "bandwidth") take(v, key, c.bandwidth);
        else if (key == "test_duration") take(v, key, c.test_duration);
        else if (key == "n_samples") take(v, key, c.n_samples);
        else if (key == "snr_db") take(v, key, c.snr_db);
        else if (key == "sinc_halfwidth") take(v, key, c.sinc_halfwidth);
        else if (key == "seed") take(v, key, c.seed);
        else if (key == "excess_delay_mean") take(v, key, c.excess_delay_mean);
        else if (key == "excess_delay_max") take(v, key, c.excess_delay_max);
        else if (key == "min_scatterer_distance") take(v, key, c.min_scatterer_distance);
        else if (key == "placement_retries") take(v, key, c.placement_retries);
        else if (key == "add_noise") take(v, key, c.add_noise);
        else if (key == "intra_block_doppler") take(v, key, c.intra_block_doppler);
        else if (key == "noise_per_component") take(v, key, c.noise_per_component);
        else throw ConfigError("unknown sim config key '" + key + "'");
    }
}

json to_json(const train::TrainConfig& c) {
    return {{"lr", c.lr},       {"epochs", c.epochs}, {"m", c.m},    {"seed", c.seed},
            {"beta1", c.beta1}, {"beta2", c.beta2},   {"eps", c.eps}};
}

void update_from_json(train::TrainConfig& c, const json& j) {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        if (key == "lr") take(v, key, c.lr);
        else if (key == "epochs") take(v, key, c.epochs);
        else if (key == "m") take(v, key, c.m);
        else if (key == "seed") take(v, key, c.seed);
        else if (key == "beta1") take(v, key, c.beta1);
        else if (key == "beta2") take(v, key, c.beta2);
        else if (key == "eps") take(v, key, c.eps);
        else throw ConfigError("unknown train config key '" + key + "'");
    }
}

json to_json(const nn::NetworkSpec& spec) {
    json layers = json::array();
    for (const auto& l : spec.layers) {
        layers.push_back({{"in_ch", l.in_ch},
                          {"out_ch", l.out_ch},
                          {"kernel", {l.k_t, l.k_f}},
                          {"dilation", {l.d_t, l.d_f}},
                          {"residual", l.has_residual},
                          {"activation", l.has_activation}});
    }
    return {{"m", spec.m}, {"layers", layers}};
}

nn::NetworkSpec spec_from_json(const json& j) {
    try {
        nn::NetworkSpec spec;
        spec.m = j.at("m").get<std::size_t>();
        for (const auto& l : j.at("layers")) {
            nn::LayerSpec ls;
            ls.in_ch = l.at("in_ch").get<std::size_t>();
            ls.out_ch = l.at("out_ch").get<std::size_t>();
            ls.k_t = l.at("kernel").at(0).get<std::size_t>();
            ls.k_f = l.at("kernel").at(1).get<std::size_t>();
            ls.d_t = l.at("dilation").at(0).get<std::size_t>();
            ls.d_f = l.at("dilation").at(1).get<std::size_t>();
            ls.has_residual = l.at("residual").get<bool>();
            ls.has_activation = l.at("activation").get<bool>();
            spec.layers.push_back(ls);
        }
        spec.validate();
        return spec;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed network spec: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ValidationError(std::string("invalid network spec: ") + e.what());
    }
}

json read_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << j.dump(2) << '\n';
    if (!os) throw IoError("write failed for " + path.string());
}

PipelineConfig load_config(const std::filesystem::path& path) {
    const json j = read_json(path);
    if (!j.is_object()) throw ConfigError(path.string() + ": top level must be an object");
    PipelineConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "sim") update_from_json(c.sim, v);
        else if (key == "train") update_from_json(c.train, v);
        else if (key == "runs") take(v, key, c.runs);
        else if (key == "split_seed") take(v, key, c.split_seed);
        else throw ConfigError("unknown config section '" + key + "'");
    }
    return c;
}

json to_json(const PipelineConfig& c) {
    return {{"sim", to_json(c.sim)}, {"train", to_json(c.train)}, {"runs", c.runs}, {"split_seed", c.split_seed}};
}

std::filesystem::path sidecar_path(const std::filesystem::path& data_path) {
    auto p = data_path;
    p += ".json";
    return p;
}

void write_series_metadata(const std::filesystem::path& data_path, const est::EstimateSeries& series,
                           const json& extra) {
    json j = {{"format", "CTFS0001"},
              {"layout", "float64 (re, im) little endian, row-major (run, step, freq)"},
              {"dft_convention", "forward unnormalized, inverse scaled by 1/N"},
              {"shape", {series.n_runs(), series.n_steps(), series.n_freq()}},
              {"sim", to_json(series.config)},
              {"seeds", series.seeds},
              {"tool_version", kToolVersion},
              {"created_utc", utc_timestamp()}};
    for (const auto& [k, v] : extra.items()) j[k] = v;
    write_json(sidecar_path(data_path), j);
}

void read_series_metadata(const std::filesystem::path& data_path, est::EstimateSeries& series) {
    const auto side = sidecar_path(data_path);
    if (!std::filesystem::exists(side)) return;
    const json j = read_json(side);
    if (j.contains("sim")) update_from_json(series.config, j["sim"]);
    if (j.contains("seeds")) series.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
}

namespace {

constexpr std::array<char, 8> kCpnnMagic{'C', 'P', 'N', 'N', '0', '0', '0', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& is) {
    std::array<unsigned char, 8> b{};
    is.read(reinterpret_cast<char*>(b.data()), 8);
    if (is.gcount() != 8) throw ValidationError("truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const json header = {{"spec", to_json(ckpt.spec)},
                         {"m", ckpt.spec.m},
                         {"step", ckpt.step},
                         {"seed", ckpt.seed},
                         {"param_count", ckpt.params.count()}};
    const std::string text = header.dump();
    os.write(kCpnnMagic.data(), kCpnnMagic.size());
    put_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    ckpt.params.for_each([&](const std::string&, std::span<const double> values) {
        for (double v : values) put_u64(os, std::bit_cast<std::uint64_t>(v));
    });
    if (!os) throw IoError("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (is.gcount() != 8 || magic != kCpnnMagic) throw ValidationError(path.string() + ": bad CPNN magic");
    const std::uint64_t len = get_u64(is);
    if (len > (1u << 24)) throw ValidationError(path.string() + ": implausible header length");
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    if (static_cast<std::uint64_t>(is.gcount()) != len) throw ValidationError(path.string() + ": truncated header");

    json header;
    try {
        header = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    Checkpoint ckpt;
    ckpt.spec = spec_from_json(header.at("spec"));
    ckpt.step = header.value("step", std::int64_t{0});
    ckpt.seed = header.value("seed", std::uint64_t{0});
    ckpt.params = nn::Parameters::zeros_like(ckpt.spec);
    ckpt.params.for_each([&](const std::string&, std::span<double> values) {
        for (double& v : values) v = std::bit_cast<double>(get_u64(is));
    });
    if (is.peek() != std::char_traits<char>::eof()) {
        throw ValidationError(path.string() + ": trailing bytes after parameters");
    }
    return ckpt;
}

void write_report_csv(const std::filesystem::path& path, const train::EvalReport& report) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "delta_t,mse_train,mse_val,mse_test,mse_trivial\n";
    os << std::setprecision(10);
    for (const auto& r : report.rows) {
        os << r.delta_t << ',' << r.mse_train << ',' << r.mse_val << ',' << r.mse_test << ',' << r.mse_trivial
           << '\n';
    }
    if (!os) throw IoError("write failed for " + path.string());
}

json report_to_json(const train::EvalReport& report) {
    json rows = json::array();
    json rows_component = json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"delta_t", r.delta_t},
                        {"mse_train", r.mse_train},
                        {"mse_val", r.mse_val},
                        {"mse_test", r.mse_test},
                        {"mse_trivial", r.mse_trivial}});
        rows_component.push_back({{"delta_t", r.delta_t},
                                  {"mse_train", r.mse_train / 2},
                                  {"mse_val", r.mse_val / 2},
                                  {"mse_test", r.mse_test / 2},
                                  {"mse_trivial", r.mse_trivial / 2}});
    }
    json history = json::array();
    for (const auto& h : report.history) {
        history.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_loss", h.val_loss}});
    }
    return {{"mse_per_complex_sample", rows},
            {"mse_per_real_component", rows_component},
            {"trivial_evaluated_on", "test"},
            {"loss_history_per_real_component", history}};
}

}  // namespace chanpred::io
