#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgcl/augment.hpp"
#include "cgcl/data_io.hpp"
#include "cgcl/graph.hpp"
#include "cgcl/metrics.hpp"
#include "cgcl/model.hpp"
#include "cgcl/rng.hpp"

namespace cgcl {

struct TrainConfig {
    std::size_t epochs = 800;
    double lr = 1e-3;
    std::size_t hidden_dim = 256;
    DecoderHead head = DecoderHead::DotScalar;
    bool one_view_ablation = false;
    bool raw_adjacency = false;
    std::uint64_t seed = 0;
    bool select_by_val = true;
    std::size_t eval_every = 10;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
        if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("TrainConfig: lr must be > 0");
        if (hidden_dim < 2) throw std::invalid_argument("TrainConfig: hidden_dim must be >= 2");
        if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
    }
};

// Losses are NaN for a view whose step did not run (ablation, or an empty
// target view); val metrics are NaN on epochs without a validation pass.
struct EpochRecord {
    std::size_t epoch = 0;
    double loss_view1 = std::numeric_limits<double>::quiet_NaN();
    double loss_view2 = std::numeric_limits<double>::quiet_NaN();
    double val_auc = std::numeric_limits<double>::quiet_NaN();
    double val_ap = std::numeric_limits<double>::quiet_NaN();
    double wall_ms = 0.0;

    // Mean over the views that ran this epoch.
    double mean_loss() const {
        double sum = 0.0;
        int count = 0;
        for (double l : {loss_view1, loss_view2}) {
            if (!std::isnan(l)) {
                sum += l;
                ++count;
            }
        }
        return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / count;
    }
};

struct TrainLog {
    std::vector<EpochRecord> records;
    std::size_t adam_steps = 0;
    std::size_t skipped_steps = 0;
};

struct TrainedModel {
    ModelParams params;
    ModelDims dims;
    AdamState adam;
    TrainConfig config;
    TrainLog log;
    std::size_t best_epoch = 0;

    Checkpoint checkpoint() const { return {dims, config.head, config.raw_adjacency, params, adam, config.seed}; }
};

class TrainingAborted : public std::runtime_error {
public:
    TrainingAborted(std::size_t epoch, const std::string& what)
        : std::runtime_error("training aborted at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
    std::size_t epoch() const { return epoch_; }

private:
    std::size_t epoch_;
};

// sigmoid(edge_logits) for query pairs, encoding over the full training graph.
inline std::vector<double> infer_scores(const ModelParams& params, DecoderHead head, const FeatureMatrix& features,
                                        const CsrAdjacency& train_adj, std::span<const Edge> pairs) {
    const Matrix z = encode(features, train_adj, params);
    std::vector<double> scores = edge_logits(z, pairs, params, head);
    for (double& s : scores) s = sigmoid(s);
    return scores;
}

inline std::vector<double> infer_scores(const TrainedModel& model, const FeatureMatrix& features,
                                        const EdgeList& train_edges, std::span<const Edge> pairs) {
    const CsrAdjacency adj = propagation_operator(train_edges, model.config.raw_adjacency);
    return infer_scores(model.params, model.config.head, features, adj, pairs);
}

struct EvalResult {
    double auc = std::numeric_limits<double>::quiet_NaN();
    double ap = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
};

inline EvalResult evaluate_pairs(const ModelParams& params, DecoderHead head, const FeatureMatrix& features,
                                 const CsrAdjacency& train_adj, const EdgeList& pos, const EdgeList& neg) {
    const auto ps = infer_scores(params, head, features, train_adj, pos.edges());
    const auto ns = infer_scores(params, head, features, train_adj, neg.edges());
    const ScoredEdges scored = ScoredEdges::from(ps, ns);
    return {auc(scored), average_precision(scored), pos.size(), neg.size()};
}

inline EvalResult evaluate(const TrainedModel& model, const FeatureMatrix& features, const EdgeList& train_edges,
                           const EdgeList& pos, const EdgeList& neg) {
    const CsrAdjacency adj = propagation_operator(train_edges, model.config.raw_adjacency);
    return evaluate_pairs(model.params, model.config.head, features, adj, pos, neg);
}

// Cross-view training. Each epoch redraws the two views; for view v the
// encoder reads v and the decoder reconstructs the other view's edges
// against an equal number of fresh negatives, followed immediately by one
// Adam step on the shared parameters.
inline TrainedModel train(const DatasetSplit& split, const FeatureMatrix& features, const TrainConfig& config,
                          std::ostream* warnings = nullptr) {
    config.validate();
    const std::size_t n = split.num_nodes;
    if (features.rows() != n || split.train_edges.num_nodes() != n) {
        throw std::invalid_argument("train: split and features disagree on node count");
    }

    Rng rng(config.seed);
    TrainedModel model;
    model.config = config;
    model.dims = ModelDims::make(features.cols(), config.hidden_dim);
    model.params = init_params(model.dims, config.head, rng);
    model.adam = AdamState::for_params(model.params);

    const EdgeSet forbidden(split.train_edges);
    const bool do_select = config.select_by_val && !split.val_pos.empty() && !split.val_neg.empty();
    const CsrAdjacency full_adj = propagation_operator(split.train_edges, config.raw_adjacency);

    std::optional<ModelParams> best_params;
    std::optional<AdamState> best_adam;
    double best_auc = -1.0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = epoch;

        const ViewPair views = bernoulli_split(split.train_edges, rng, config.raw_adjacency);
        const int last_view = config.one_view_ablation ? 1 : 2;
        for (int v = 1; v <= last_view; ++v) {
            const int other = v == 1 ? 2 : 1;
            const EdgeList& targets = views.view(other);
            if (targets.empty()) {
                ++model.log.skipped_steps;
                if (warnings) {
                    *warnings << "warning: epoch " << epoch << ": view " << other
                              << " is empty, skipping the step for view " << v << '\n';
                }
                continue;
            }
            EdgeBatch batch;
            batch.pairs.reserve(2 * targets.size());
            batch.targets.reserve(2 * targets.size());
            for (const Edge& e : targets) batch.add(e, 1.0);
            for (const Edge& e : sample_negatives(targets.size(), forbidden, n, rng)) batch.add(e, 0.0);

            LossAndGrads lg;
            try {
                lg = backward(features, views.adj(v), batch, model.params, config.head);
                if (!std::isfinite(lg.loss)) throw NonFiniteError("non-finite loss");
                adam_step(model.params, lg.grads, model.adam, config.lr);
            } catch (const NonFiniteError& e) {
                throw TrainingAborted(epoch, e.what());
            }
            ++model.log.adam_steps;
            (v == 1 ? rec.loss_view1 : rec.loss_view2) = lg.loss;
        }

        if (do_select && (epoch % config.eval_every == 0 || epoch == config.epochs)) {
            const EvalResult val =
                evaluate_pairs(model.params, config.head, features, full_adj, split.val_pos, split.val_neg);
            rec.val_auc = val.auc;
            rec.val_ap = val.ap;
            if (val.auc > best_auc) {
                best_auc = val.auc;
                best_params = model.params;
                best_adam = model.adam;
                model.best_epoch = epoch;
            }
        }
        rec.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        model.log.records.push_back(rec);
    }

    if (best_params) {
        model.params = std::move(*best_params);
        model.adam = std::move(*best_adam);
    } else {
        model.best_epoch = config.epochs;
    }
    return model;
}

// Empirical consistency measures on one fresh view split: the pair sample is
// every training edge plus an equal number of non-edges; A_v marks view
// membership and R_v is the link probability decoded from the other view.
inline CrossViewDiagnostics consistency_diagnostics(const TrainedModel& model, const FeatureMatrix& features,
                                                    const EdgeList& train_edges, Rng& rng) {
    const ViewPair views = bernoulli_split(train_edges, rng, model.config.raw_adjacency);
    std::vector<Edge> pairs(train_edges.begin(), train_edges.end());
    const EdgeSet forbidden(train_edges);
    for (const Edge& e : sample_negatives(train_edges.size(), forbidden, train_edges.num_nodes(), rng)) {
        pairs.push_back(e);
    }
    std::vector<double> a1, a2;
    a1.reserve(pairs.size());
    a2.reserve(pairs.size());
    for (const Edge& e : pairs) {
        a1.push_back(views.view1.contains(e) ? 1.0 : 0.0);
        a2.push_back(views.view2.contains(e) ? 1.0 : 0.0);
    }
    const auto r1 = infer_scores(model.params, model.config.head, features, views.adj2, pairs);
    const auto r2 = infer_scores(model.params, model.config.head, features, views.adj1, pairs);
    return cross_view_diagnostics(a1, a2, r1, r2);
}

inline void write_loss_csv(const TrainLog& log, std::ostream& out) {
    out << "epoch,loss_view1,loss_view2,val_auc,val_ap,wall_ms\n";
    for (const EpochRecord& r : log.records) {
        out << r.epoch << ',' << detail::format_double(r.loss_view1) << ',' << detail::format_double(r.loss_view2)
            << ',' << detail::format_double(r.val_auc) << ',' << detail::format_double(r.val_ap) << ','
            << detail::format_double(std::round(r.wall_ms * 1000.0) / 1000.0) << '\n';
    }
}

inline void write_loss_csv(const TrainLog& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_loss_csv(log, out);
}

}  // namespace cgcl
