// cgcl: split / train / sweep / eval driver for cross-view link prediction.
//
// Exit codes: 0 success, 2 usage or validation failure, 3 runtime failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cgcl/data_io.hpp"
#include "cgcl/experiment.hpp"
#include "cgcl/model.hpp"
#include "cgcl/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetArgs {
    std::string cora;
    std::vector<std::string> generic;
    std::string sbm;

    void attach(CLI::App* cmd) {
        auto* c = cmd->add_option("--cora,--citation", cora, "directory holding a .content/.cites pair");
        auto* g = cmd->add_option("--generic", generic, "EDGES FEATURES tsv files")->expected(2);
        auto* s = cmd->add_option("--sbm", sbm, "synthetic block model B,SZ,PIN,POUT,D");
        c->excludes(g)->excludes(s);
        g->excludes(s);
    }

    cgcl::DatasetSpec spec() const {
        cgcl::DatasetSpec spec;
        const int given = !cora.empty() + !generic.empty() + !sbm.empty();
        if (given != 1) throw UsageError("exactly one of --cora, --generic, --sbm is required");
        if (!cora.empty()) {
            spec.kind = cgcl::DatasetSpec::Kind::Citation;
            spec.citation_dir = cora;
        } else if (!generic.empty()) {
            spec.kind = cgcl::DatasetSpec::Kind::Generic;
            spec.edges_path = generic[0];
            spec.features_path = generic[1];
        } else {
            spec.kind = cgcl::DatasetSpec::Kind::Sbm;
            try {
                spec.sbm = cgcl::parse_sbm_spec(sbm);
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
        }
        return spec;
    }
};

struct TrainArgs {
    std::size_t epochs = 800;
    double lr = 1e-3;
    std::size_t hidden = 256;
    std::string head = "dot";
    bool one_view = false;
    bool raw_adjacency = false;
    bool no_select = false;
    std::size_t repeat = 10;

    void attach(CLI::App* cmd) {
        cmd->add_option("--epochs", epochs, "training epochs")->capture_default_str();
        cmd->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
        cmd->add_option("--hidden", hidden, "encoder width d_v")->capture_default_str();
        cmd->add_option("--head", head, "decoder head: dot|hadamard")->capture_default_str();
        cmd->add_flag("--one-view", one_view, "single-view ablation");
        cmd->add_flag("--raw-adjacency", raw_adjacency, "propagate with the unnormalized adjacency");
        cmd->add_flag("--no-select", no_select, "return last-epoch parameters instead of best validation AUC");
        cmd->add_option("--repeat", repeat, "repeats with derived init seeds")->capture_default_str();
    }

    cgcl::TrainConfig config(std::uint64_t seed) const {
        cgcl::TrainConfig tc;
        tc.epochs = epochs;
        tc.lr = lr;
        tc.hidden_dim = hidden;
        tc.head = cgcl::parse_head(head);
        tc.one_view_ablation = one_view;
        tc.raw_adjacency = raw_adjacency;
        tc.select_by_val = !no_select;
        tc.seed = seed;
        return tc;
    }
};

std::vector<std::size_t> parse_size_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(static_cast<std::size_t>(std::stoull(tok)));
    if (out.empty()) throw UsageError("empty grid");
    return out;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    if (out.empty()) throw UsageError("empty grid");
    return out;
}

// Either the manifest given on the command line or a fresh seeded split.
cgcl::DatasetSplit obtain_split(const cgcl::RawDataset& data, const std::string& manifest, double val_frac,
                                double test_frac, std::uint64_t seed) {
    if (!manifest.empty()) {
        cgcl::DatasetSplit split = cgcl::read_split_manifest(manifest);
        try {
            cgcl::validate_split(split, data.edges);
        } catch (const std::logic_error& e) {
            throw UsageError(std::string("manifest does not match dataset: ") + e.what());
        }
        return split;
    }
    if (val_frac < 0.0 || test_frac < 0.0 || val_frac + test_frac >= 1.0) {
        throw UsageError("--val-frac and --test-frac must be >= 0 and sum to less than 1");
    }
    return cgcl::make_split(data, val_frac, test_frac, seed);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-view graph consistency learning for link prediction"};
    app.require_subcommand(1);

    DatasetArgs data_args;
    TrainArgs train_args;
    double test_frac = 0.10;
    double val_frac = 0.05;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::string manifest;
    std::string checkpoint;
    std::string hidden_grid = "512,256,128,64";
    std::string lr_grid = "0.001,0.005,0.01,0.05";

    auto add_split_opts = [&](CLI::App* cmd) {
        cmd->add_option("--test-frac", test_frac, "fraction of edges held out for testing")->capture_default_str();
        cmd->add_option("--val-frac", val_frac, "fraction of edges held out for validation")->capture_default_str();
        cmd->add_option("--seed", seed, "base seed")->capture_default_str();
    };

    auto* split_cmd = app.add_subcommand("split", "write a train/val/test split manifest");
    data_args.attach(split_cmd);
    add_split_opts(split_cmd);
    split_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "train repeated models and report test metrics");
    data_args.attach(train_cmd);
    add_split_opts(train_cmd);
    train_args.attach(train_cmd);
    train_cmd->add_option("--manifest", manifest, "use this split manifest instead of splitting");
    train_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* sweep_cmd = app.add_subcommand("sweep", "grid over hidden width and learning rate");
    data_args.attach(sweep_cmd);
    add_split_opts(sweep_cmd);
    train_args.attach(sweep_cmd);
    sweep_cmd->add_option("--manifest", manifest, "use this split manifest instead of splitting");
    sweep_cmd->add_option("--hidden-grid", hidden_grid, "comma-separated d_v values")->capture_default_str();
    sweep_cmd->add_option("--lr-grid", lr_grid, "comma-separated learning rates")->capture_default_str();
    sweep_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a manifest's test pairs");
    data_args.attach(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint, "CGCL1 checkpoint file")->required();
    eval_cmd->add_option("--manifest", manifest, "split manifest")->required();
    eval_cmd->add_option("--out", out_dir, "metrics JSON output file (stdout when omitted)");
    eval_cmd->add_option("--seed", seed, "unused; accepted for uniformity");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        const cgcl::DatasetSpec spec = data_args.spec();
        cgcl::RawDataset data;
        try {
            data = cgcl::load_dataset(spec, seed);
        } catch (const std::exception& e) {
            throw UsageError(std::string("cannot load dataset: ") + e.what());
        }
        if (data.skipped_edges > 0) {
            std::cerr << "warning: skipped " << data.skipped_edges << " citations with unknown endpoints\n";
        }

        if (*split_cmd) {
            const cgcl::DatasetSplit split = obtain_split(data, "", val_frac, test_frac, seed);
            try {
                fs::create_directories(out_dir);
                cgcl::write_split_manifest(split, fs::path(out_dir) / "split.json");
            } catch (const std::exception& e) {
                throw UsageError(std::string("cannot write manifest: ") + e.what());
            }
            std::cout << "nodes=" << split.num_nodes << " edges=" << data.edges.size()
                      << " train=" << split.train_edges.size() << " val_pos=" << split.val_pos.size()
                      << " val_neg=" << split.val_neg.size() << " test_pos=" << split.test_pos.size()
                      << " test_neg=" << split.test_neg.size() << '\n';
            return 0;
        }

        if (*train_cmd || *sweep_cmd) {
            cgcl::RunConfig rc;
            rc.dataset = spec;
            rc.val_frac = val_frac;
            rc.test_frac = test_frac;
            rc.repeat = train_args.repeat;
            rc.threads = cgcl::threads_from_env();
            rc.out_dir = fs::path(out_dir);
            try {
                rc.train = train_args.config(seed);
                rc.validate();
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            const cgcl::DatasetSplit split = obtain_split(data, manifest, val_frac, test_frac, seed);
            fs::create_directories(out_dir);
            cgcl::write_split_manifest(split, fs::path(out_dir) / "split.json");

            if (*train_cmd) {
                try {
                    const cgcl::RunReport rep = cgcl::run_experiment(rc, data, split);
                    std::cout << "auc " << rep.auc_mean << " +- " << rep.auc_std << "  ap " << rep.ap_mean << " +- "
                              << rep.ap_std << "  (" << rep.repeats.size() << " repeats)\n";
                } catch (const cgcl::TrainingAborted& e) {
                    std::cerr << "error: " << e.what() << '\n';
                    return kExitRuntime;
                }
                return 0;
            }

            const auto rows = cgcl::run_sweep(rc, data, split, parse_size_list(hidden_grid),
                                              parse_double_list(lr_grid));
            std::ofstream csv(fs::path(out_dir) / "sweep.csv", std::ios::binary);
            if (!csv) throw std::runtime_error("cannot write sweep.csv");
            cgcl::write_sweep_csv(rows, csv);
            cgcl::write_sweep_csv(rows, std::cout);
            const bool all_failed = std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.failed; });
            return all_failed ? kExitRuntime : 0;
        }

        if (*eval_cmd) {
            cgcl::Checkpoint ckpt;
            cgcl::DatasetSplit split;
            try {
                ckpt = cgcl::load_checkpoint(checkpoint);
                split = cgcl::read_split_manifest(manifest);
            } catch (const std::exception& e) {
                throw UsageError(e.what());
            }
            if (split.num_nodes != data.features.rows() || ckpt.dims.in_dim != data.features.cols()) {
                throw UsageError("checkpoint/manifest incompatible with dataset (node count or feature dim)");
            }
            if (split.test_pos.empty() || split.test_neg.empty()) {
                throw UsageError("manifest has no test pairs to evaluate");
            }
            const cgcl::TrainedModel model = cgcl::model_from_checkpoint(ckpt);
            const nlohmann::json metrics = cgcl::test_metrics_json(model, data.features, split);
            if (out_dir.empty()) {
                std::cout << metrics.dump(2) << '\n';
            } else {
                cgcl::write_json_file(metrics, out_dir);
            }
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
