#include "chanpred/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "chanpred/error.hpp"

namespace chanpred::train {

DatasetSplit build_dataset(const est::EstimateSeries& series, std::uint64_t seed, const SplitConfig& split) {
    const std::size_t per_run = split.segments_per_run;
    if (per_run == 0 || split.n_train + split.n_val + split.n_test != per_run) {
        throw ValidationError("split sizes must add up to the segments per run");
    }
    if (series.n_runs() == 0 || series.n_steps() % per_run != 0 || series.n_steps() < per_run) {
        throw ValidationError("series with " + std::to_string(series.n_steps()) +
                              " steps cannot be cut into " + std::to_string(per_run) + " equal segments");
    }
    const std::size_t len = series.n_steps() / per_run;
    const std::size_t n_freq = series.n_freq();

    std::mt19937_64 rng(seed);
    DatasetSplit out;
    for (std::size_t r = 0; r < series.n_runs(); ++r) {
        std::vector<std::size_t> order(per_run);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t k = 0; k < per_run; ++k) {
            Segment seg;
            seg.run = r;
            seg.index = order[k];
            seg.time = len;
            seg.freq = n_freq;
            seg.values.reserve(len * n_freq);
            for (std::size_t t = 0; t < len; ++t) {
                const auto row = series.block(r, seg.index * len + t);
                seg.values.insert(seg.values.end(), row.begin(), row.end());
            }
            auto& dst = k < split.n_train ? out.train : (k < split.n_train + split.n_val ? out.val : out.test);
            dst.push_back(std::move(seg));
        }
    }
    return out;
}

nn::Tensor3 to_tensor(const Segment& segment) {
    nn::Tensor3 x(2, segment.time, segment.freq);
    for (std::size_t t = 0; t < segment.time; ++t) {
        double* re = x.row(0, t);
        double* im = x.row(1, t);
        for (std::size_t f = 0; f < segment.freq; ++f) {
            re[f] = segment.at(t, f).real();
            im[f] = segment.at(t, f).imag();
        }
    }
    return x;
}

Example make_targets(const Segment& segment, std::size_t m) {
    if (m == 0 || m >= segment.time) {
        throw std::invalid_argument("horizon m=" + std::to_string(m) + " must be in [1, segment length)");
    }
    Example ex;
    ex.input = to_tensor(segment);
    ex.target = nn::Tensor3(2 * m, segment.time, segment.freq);
    ex.mask.valid_time.resize(2 * m);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t valid = segment.time - (k + 1);
        ex.mask.valid_time[2 * k] = valid;
        ex.mask.valid_time[2 * k + 1] = valid;
        for (std::size_t t = 0; t < valid; ++t) {
            std::copy_n(ex.input.row(0, t + k + 1), segment.freq, ex.target.row(2 * k, t));
            std::copy_n(ex.input.row(1, t + k + 1), segment.freq, ex.target.row(2 * k + 1, t));
        }
    }
    return ex;
}

double mean_loss(const nn::NetworkSpec& spec, const nn::Parameters& params, std::span<const Segment> segments) {
    if (segments.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& seg : segments) {
        const Example ex = make_targets(seg, spec.m);
        sum += nn::mse_loss(nn::network_forward(spec, params, ex.input), ex.target, ex.mask).loss;
    }
    return sum / static_cast<double>(segments.size());
}

TrainResult train(const nn::NetworkSpec& spec, const DatasetSplit& dataset, const TrainConfig& config,
                  const TrainProgress& progress) {
    spec.validate();
    if (!(config.lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (config.m != spec.m) throw ConfigError("TrainConfig.m does not match the network horizon");

    std::mt19937_64 rng(config.seed);
    TrainResult result;
    result.params = nn::init_params(spec, rng);
    if (config.epochs == 0) return result;
    if (dataset.train.empty()) throw ValidationError("training set is empty");

    nn::AdamState adam = nn::AdamState::for_spec(spec);
    const nn::AdamConfig adam_cfg{config.lr, config.beta1, config.beta2, config.eps};

    std::vector<std::size_t> order(dataset.train.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t k = 0; k < order.size(); ++k) {
            const Example ex = make_targets(dataset.train[order[k]], spec.m);
            nn::ForwardTrace trace;
            const nn::Tensor3 out = nn::network_forward(spec, result.params, ex.input, &trace);
            const nn::LossResult loss = nn::mse_loss(out, ex.target, ex.mask);
            if (!std::isfinite(loss.loss)) {
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", segment " +
                                      std::to_string(k));
            }
            const auto back = nn::network_backward(spec, result.params, trace, loss.grad);
            try {
                nn::adam_step(result.params, back.grads, adam, adam_cfg);
            } catch (const DivergenceError& e) {
                throw DivergenceError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                      ", segment " + std::to_string(k) + ")");
            }
            epoch_loss += loss.loss;
            if (progress) progress(epoch, k + 1, order.size(), loss.loss);
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(order.size());
        stats.val_loss = mean_loss(spec, result.params, dataset.val);
        result.history.push_back(stats);
    }
    result.steps = adam.step;
    return result;
}

std::vector<double> evaluate_mse_all(const nn::NetworkSpec& spec, const nn::Parameters& params,
                                     std::span<const Segment> segments) {
    const std::size_t m = spec.m;
    std::vector<double> sum(m, 0.0);
    std::vector<std::size_t> count(m, 0);
    for (const auto& seg : segments) {
        if (m >= seg.time) throw std::invalid_argument("segment shorter than the horizon");
        const nn::Tensor3 out = nn::network_forward(spec, params, to_tensor(seg));
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t dt = k + 1;
            for (std::size_t t = 0; t + dt < seg.time; ++t) {
                const double* re = out.row(2 * k, t);
                const double* im = out.row(2 * k + 1, t);
                for (std::size_t f = 0; f < seg.freq; ++f) {
                    sum[k] += std::norm(cd{re[f], im[f]} - seg.at(t + dt, f));
                }
                count[k] += seg.freq;
            }
        }
    }
    std::vector<double> mse(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) mse[k] = count[k] ? sum[k] / static_cast<double>(count[k]) : 0.0;
    return mse;
}

double evaluate_mse(const nn::NetworkSpec& spec, const nn::Parameters& params,
                    std::span<const Segment> segments, std::size_t delta_t) {
    if (delta_t < 1 || delta_t > spec.m) {
        throw std::out_of_range("delta_t=" + std::to_string(delta_t) + " outside [1, m]");
    }
    return evaluate_mse_all(spec, params, segments)[delta_t - 1];
}

double trivial_baseline_mse(std::span<const Segment> segments, std::size_t delta_t, std::size_t m) {
    if (delta_t < 1 || delta_t > m) {
        throw std::out_of_range("delta_t=" + std::to_string(delta_t) + " outside [1, m]");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& seg : segments) {
        for (std::size_t t = 0; t + delta_t < seg.time; ++t) {
            for (std::size_t f = 0; f < seg.freq; ++f) sum += std::norm(seg.at(t + delta_t, f) - seg.at(t, f));
            count += seg.freq;
        }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

EvalReport evaluate_report(const nn::NetworkSpec& spec, const nn::Parameters& params,
                           const DatasetSplit& dataset, std::vector<EpochStats> history) {
    const auto tr = evaluate_mse_all(spec, params, dataset.train);
    const auto va = evaluate_mse_all(spec, params, dataset.val);
    const auto te = evaluate_mse_all(spec, params, dataset.test);
    EvalReport report;
    report.history = std::move(history);
    for (std::size_t k = 0; k < spec.m; ++k) {
        report.rows.push_back(
            {k + 1, tr[k], va[k], te[k], trivial_baseline_mse(dataset.test, k + 1, spec.m)});
    }
    return report;
}

std::vector<std::vector<cd>> predict_ahead(const nn::NetworkSpec& spec, const nn::Parameters& params,
                                           const est::EstimateSeries& series, std::size_t run,
                                           std::size_t t0, std::size_t window) {
    if (run >= series.n_runs() || t0 >= series.n_steps()) throw std::out_of_range("predict_ahead: index out of range");
    window = std::max<std::size_t>(1, std::min(window, t0 + 1));
    Segment ctx;
    ctx.run = run;
    ctx.time = window;
    ctx.freq = series.n_freq();
    for (std::size_t t = t0 + 1 - window; t <= t0; ++t) {
        const auto row = series.block(run, t);
        ctx.values.insert(ctx.values.end(), row.begin(), row.end());
    }
    const nn::Tensor3 out = nn::network_forward(spec, params, to_tensor(ctx));
    std::vector<std::vector<cd>> pred(spec.m, std::vector<cd>(ctx.freq));
    for (std::size_t k = 0; k < spec.m; ++k) {
        for (std::size_t f = 0; f < ctx.freq; ++f) {
            pred[k][f] = {out.at(2 * k, window - 1, f), out.at(2 * k + 1, window - 1, f)};
        }
    }
    return pred;
}

}  // namespace chanpred::train
