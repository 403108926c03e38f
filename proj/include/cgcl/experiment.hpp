#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "cgcl/data_io.hpp"
#include "cgcl/metrics.hpp"
#include "cgcl/model.hpp"
#include "cgcl/rng.hpp"
#include "cgcl/trainer.hpp"

namespace cgcl {

struct SbmSpec {
    std::size_t num_blocks = 2;
    std::size_t block_size = 100;
    double p_in = 0.3;
    double p_out = 0.01;
    std::size_t feat_dim = 16;
};

// "B,SZ,PIN,POUT,D"
inline SbmSpec parse_sbm_spec(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) parts.push_back(tok);
    if (parts.size() != 5) throw std::invalid_argument("--sbm expects B,SZ,PIN,POUT,D");
    try {
        std::size_t used = 0;
        auto as_size = [&](const std::string& s) {
            const long long v = std::stoll(s, &used);
            if (used != s.size() || v <= 0) throw std::invalid_argument(s);
            return static_cast<std::size_t>(v);
        };
        auto as_double = [&](const std::string& s) {
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        };
        return {as_size(parts[0]), as_size(parts[1]), as_double(parts[2]), as_double(parts[3]), as_size(parts[4])};
    } catch (const std::exception&) {
        throw std::invalid_argument("--sbm: cannot parse '" + text + "'");
    }
}

struct DatasetSpec {
    enum class Kind { Citation, Generic, Sbm };
    Kind kind = Kind::Sbm;
    std::filesystem::path citation_dir;
    std::filesystem::path edges_path;
    std::filesystem::path features_path;
    SbmSpec sbm;

    nlohmann::json to_json() const {
        switch (kind) {
            case Kind::Citation: return {{"kind", "citation"}, {"dir", citation_dir.string()}};
            case Kind::Generic:
                return {{"kind", "generic"}, {"edges", edges_path.string()}, {"features", features_path.string()}};
            case Kind::Sbm:
                return {{"kind", "sbm"},         {"num_blocks", sbm.num_blocks}, {"block_size", sbm.block_size},
                        {"p_in", sbm.p_in},      {"p_out", sbm.p_out},         {"feat_dim", sbm.feat_dim}};
        }
        return {};
    }
};

// SBM graphs are generated from `seed`, so the same seed names the same graph.
inline RawDataset load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    switch (spec.kind) {
        case DatasetSpec::Kind::Citation: return load_citation_dir(spec.citation_dir);
        case DatasetSpec::Kind::Generic: return load_generic(spec.edges_path, spec.features_path);
        case DatasetSpec::Kind::Sbm: {
            Rng rng(seed);
            return generate_sbm(spec.sbm.num_blocks, spec.sbm.block_size, spec.sbm.p_in, spec.sbm.p_out,
                                spec.sbm.feat_dim, rng);
        }
    }
    throw std::logic_error("unknown dataset kind");
}

inline DatasetSplit make_split(const RawDataset& data, double val_frac, double test_frac, std::uint64_t seed) {
    Rng rng(seed);
    DatasetSplit split = split_edges(data, val_frac, test_frac, rng);
    split.seed = seed;
    return split;
}

struct RunConfig {
    DatasetSpec dataset;
    double val_frac = 0.05;
    double test_frac = 0.10;
    TrainConfig train;  // train.seed is the base seed
    std::optional<std::filesystem::path> out_dir;
    std::size_t repeat = 10;
    std::size_t threads = 1;
    bool write_artifacts = true;

    void validate() const {
        if (repeat < 1) throw std::invalid_argument("repeat must be >= 1");
        if (threads < 1) throw std::invalid_argument("threads must be >= 1");
        if (val_frac < 0.0 || test_frac < 0.0 || val_frac + test_frac >= 1.0) {
            throw std::invalid_argument("val-frac and test-frac must be >= 0 and sum to less than 1");
        }
        train.validate();
    }

    nlohmann::json to_json() const {
        return {
            {"dataset", dataset.to_json()},
            {"val_frac", val_frac},
            {"test_frac", test_frac},
            {"epochs", train.epochs},
            {"lr", train.lr},
            {"hidden_dim", train.hidden_dim},
            {"head", to_string(train.head)},
            {"one_view", train.one_view_ablation},
            {"raw_adjacency", train.raw_adjacency},
            {"select_by_val", train.select_by_val},
            {"seed", train.seed},
            {"repeat", repeat},
        };
    }
};

inline std::size_t threads_from_env() {
    const char* v = std::getenv("CGCL_THREADS");
    if (!v || !*v) return 1;
    try {
        const long long t = std::stoll(v);
        return t < 1 ? 1 : static_cast<std::size_t>(t);
    } catch (const std::exception&) {
        return 1;
    }
}

struct RepeatResult {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    EvalResult test;
    double val_auc = std::numeric_limits<double>::quiet_NaN();  // at the selected epoch
    std::size_t best_epoch = 0;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
};

struct RunReport {
    nlohmann::json config;
    std::vector<RepeatResult> repeats;
    double auc_mean = 0.0, auc_std = 0.0, ap_mean = 0.0, ap_std = 0.0;
    double wall_seconds = 0.0;

    // Deterministic content only; wall time is written separately.
    nlohmann::json to_json() const {
        nlohmann::json reps = nlohmann::json::array();
        for (const auto& r : repeats) {
            reps.push_back({{"repeat", r.index},
                            {"seed", r.seed},
                            {"auc", r.test.auc},
                            {"ap", r.test.ap},
                            {"val_auc", r.val_auc},
                            {"best_epoch", r.best_epoch},
                            {"final_loss", r.final_loss}});
        }
        return {{"config", config},  {"repeats", reps}, {"n_repeats", repeats.size()}, {"auc_mean", auc_mean},
                {"auc_std", auc_std}, {"ap_mean", ap_mean}, {"ap_std", ap_std}};
    }
};

// Mean and sample standard deviation (NaN deviation for a single value).
inline std::pair<double, double> mean_and_std(const std::vector<double>& xs) {
    if (xs.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return {mean, std::numeric_limits<double>::quiet_NaN()};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

// Metrics report for a model on the test pairs of a split, including the
// cross-view consistency diagnostics drawn with the model's seed.
inline nlohmann::json test_metrics_json(const TrainedModel& model, const FeatureMatrix& features,
                                        const DatasetSplit& split) {
    const EvalResult test = evaluate(model, features, split.train_edges, split.test_pos, split.test_neg);
    nlohmann::json consistency = nlohmann::json::object();
    if (!split.train_edges.empty()) {
        Rng rng(model.config.seed);
        consistency = to_json(consistency_diagnostics(model, features, split.train_edges, rng));
    }
    return metrics_report(test.auc, test.ap, test.n_pos, test.n_neg, consistency);
}

inline TrainedModel model_from_checkpoint(const Checkpoint& c) {
    TrainedModel m;
    m.params = c.params;
    m.dims = c.dims;
    m.adam = c.adam;
    m.config.head = c.head;
    m.config.raw_adjacency = c.raw_adjacency;
    m.config.hidden_dim = c.dims.hidden_dim;
    m.config.seed = c.seed;
    return m;
}

// Trains `repeat` models on one fixed split; repeat r uses init seed
// base_seed + r. Repeats run on up to `threads` workers; every repeat owns
// its generator, so results do not depend on the thread count.
inline RunReport run_experiment(const RunConfig& config, const RawDataset& data, const DatasetSplit& split,
                                std::ostream& log = std::cerr) {
    config.validate();
    if (data.features.rows() != split.num_nodes) {
        throw std::invalid_argument("dataset and split disagree on node count");
    }
    const auto t0 = std::chrono::steady_clock::now();
    if (config.out_dir && config.write_artifacts) std::filesystem::create_directories(*config.out_dir);

    std::vector<RepeatResult> results(config.repeat);
    std::vector<std::exception_ptr> errors(config.repeat);
    std::vector<double> seconds(config.repeat, 0.0);
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t r = next.fetch_add(1);
            if (r >= config.repeat) return;
            const auto r0 = std::chrono::steady_clock::now();
            try {
                TrainConfig tc = config.train;
                tc.seed = config.train.seed + r;
                std::ostringstream warn;
                const TrainedModel model = train(split, data.features, tc, &warn);
                const nlohmann::json metrics = test_metrics_json(model, data.features, split);

                RepeatResult& res = results[r];
                res.index = r;
                res.seed = tc.seed;
                res.test = {metrics.at("auc").get<double>(), metrics.at("ap").get<double>(), split.test_pos.size(),
                            split.test_neg.size()};
                res.best_epoch = model.best_epoch;
                if (model.best_epoch >= 1 && model.best_epoch <= model.log.records.size()) {
                    res.val_auc = model.log.records[model.best_epoch - 1].val_auc;
                }
                if (!model.log.records.empty()) res.final_loss = model.log.records.back().mean_loss();

                if (config.out_dir && config.write_artifacts) {
                    const auto dir = *config.out_dir / ("repeat_" + std::to_string(r));
                    std::filesystem::create_directories(dir);
                    save_checkpoint(model.checkpoint(), dir / "checkpoint.json");
                    write_loss_csv(model.log, dir / "loss.csv");
                    write_json_file(metrics, dir / "metrics.json");
                }
                std::lock_guard lock(log_mutex);
                log << warn.str() << "repeat " << r << " (seed " << tc.seed << "): test auc=" << res.test.auc
                    << " ap=" << res.test.ap << " best_epoch=" << res.best_epoch << '\n';
            } catch (...) {
                errors[r] = std::current_exception();
            }
            seconds[r] = std::chrono::duration<double>(std::chrono::steady_clock::now() - r0).count();
        }
    };

    const std::size_t workers = std::min(config.threads, config.repeat);
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    RunReport report;
    report.config = config.to_json();
    report.repeats = std::move(results);
    std::vector<double> aucs, aps;
    for (const auto& r : report.repeats) {
        aucs.push_back(r.test.auc);
        aps.push_back(r.test.ap);
    }
    std::tie(report.auc_mean, report.auc_std) = mean_and_std(aucs);
    std::tie(report.ap_mean, report.ap_std) = mean_and_std(aps);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (config.out_dir && config.write_artifacts) {
        write_json_file(report.to_json(), *config.out_dir / "report.json");
        nlohmann::json timing = {{"wall_seconds", report.wall_seconds}, {"repeat_seconds", seconds}};
        write_json_file(timing, *config.out_dir / "timing.json");
    }
    return report;
}

struct SweepRow {
    std::size_t hidden_dim = 0;
    double lr = 0.0;
    double auc_mean = std::numeric_limits<double>::quiet_NaN();
    double auc_std = std::numeric_limits<double>::quiet_NaN();
    double ap_mean = std::numeric_limits<double>::quiet_NaN();
    double ap_std = std::numeric_limits<double>::quiet_NaN();
    double val_auc_mean = std::numeric_limits<double>::quiet_NaN();
    bool failed = false;
};

inline std::vector<std::size_t> default_hidden_grid() { return {512, 256, 128, 64}; }
inline std::vector<double> default_lr_grid() { return {1e-3, 5e-3, 0.01, 0.05}; }

// Full Cartesian grid over (hidden_dim, lr). Every cell sees the same split.
// A failing cell yields a NaN row and a warning.
inline std::vector<SweepRow> run_sweep(const RunConfig& base, const RawDataset& data, const DatasetSplit& split,
                                       const std::vector<std::size_t>& hidden_grid, const std::vector<double>& lr_grid,
                                       std::ostream& log = std::cerr) {
    std::vector<SweepRow> rows;
    for (std::size_t dv : hidden_grid) {
        for (double lr : lr_grid) {
            SweepRow row;
            row.hidden_dim = dv;
            row.lr = lr;
            RunConfig cell = base;
            cell.train.hidden_dim = dv;
            cell.train.lr = lr;
            cell.write_artifacts = false;
            try {
                const RunReport rep = run_experiment(cell, data, split, log);
                row.auc_mean = rep.auc_mean;
                row.auc_std = rep.auc_std;
                row.ap_mean = rep.ap_mean;
                row.ap_std = rep.ap_std;
                std::vector<double> vals;
                for (const auto& r : rep.repeats) vals.push_back(r.val_auc);
                row.val_auc_mean = mean_and_std(vals).first;
            } catch (const std::exception& e) {
                row.failed = true;
                log << "warning: sweep cell d_v=" << dv << " lr=" << lr << " failed: " << e.what() << '\n';
            }
            rows.push_back(row);
        }
    }
    return rows;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
    out << "d_v,lr,auc_mean,auc_std,ap_mean,ap_std\n";
    for (const auto& r : rows) {
        out << r.hidden_dim << ',' << detail::format_double(r.lr) << ',' << detail::format_double(r.auc_mean) << ','
            << detail::format_double(r.auc_std) << ',' << detail::format_double(r.ap_mean) << ','
            << detail::format_double(r.ap_std) << '\n';
    }
}

}  // namespace cgcl
