#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cgcl/graph.hpp"
#include "cgcl/rng.hpp"

namespace cgcl {

enum class DecoderHead {
    DotScalar,  // h_ij = <z_i, z_j>, a scalar fed to the MLP
    Hadamard,   // h_ij = z_i * z_j elementwise, a d_v-vector fed to the MLP
};

inline std::string to_string(DecoderHead head) {
    return head == DecoderHead::DotScalar ? "dot" : "hadamard";
}

inline DecoderHead parse_head(const std::string& s) {
    if (s == "dot") return DecoderHead::DotScalar;
    if (s == "hadamard") return DecoderHead::Hadamard;
    throw std::invalid_argument("unknown decoder head '" + s + "' (expected dot|hadamard)");
}

struct ModelDims {
    std::size_t in_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t mlp_hidden = 0;

    static ModelDims make(std::size_t in_dim, std::size_t hidden_dim) {
        ModelDims d{in_dim, hidden_dim, hidden_dim / 2};
        d.validate();
        return d;
    }

    void validate() const {
        if (in_dim == 0 || hidden_dim == 0 || mlp_hidden == 0) {
            throw std::invalid_argument("ModelDims: all dimensions must be positive (hidden_dim >= 2)");
        }
        if (mlp_hidden != hidden_dim / 2) {
            throw std::invalid_argument("ModelDims: mlp_hidden must equal hidden_dim / 2");
        }
    }

    std::size_t head_width(DecoderHead head) const {
        return head == DecoderHead::DotScalar ? 1 : hidden_dim;
    }

    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Shared encoder weight plus the two-layer decoder MLP. Biases are stored as
// 1 x m matrices so every tensor can be visited uniformly.
struct ModelParams {
    Matrix w1;      // in_dim x hidden_dim
    Matrix mlp_w1;  // head_width x mlp_hidden
    Matrix mlp_b1;  // 1 x mlp_hidden
    Matrix mlp_w2;  // mlp_hidden x 1
    Matrix mlp_b2;  // 1 x 1

    static ModelParams zeros(const ModelDims& dims, DecoderHead head) {
        const std::size_t k = dims.head_width(head);
        return {Matrix(dims.in_dim, dims.hidden_dim), Matrix(k, dims.mlp_hidden),
                Matrix(1, dims.mlp_hidden), Matrix(dims.mlp_hidden, 1), Matrix(1, 1)};
    }

    static ModelParams zeros_like(const ModelParams& p) {
        return {Matrix(p.w1.rows(), p.w1.cols()), Matrix(p.mlp_w1.rows(), p.mlp_w1.cols()),
                Matrix(p.mlp_b1.rows(), p.mlp_b1.cols()), Matrix(p.mlp_w2.rows(), p.mlp_w2.cols()),
                Matrix(1, 1)};
    }

    std::array<Matrix*, 5> tensors() { return {&w1, &mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2}; }
    std::array<const Matrix*, 5> tensors() const { return {&w1, &mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2}; }

    static constexpr std::array<const char*, 5> names = {"w1", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2"};

    bool all_finite() const {
        for (const Matrix* t : tensors()) {
            if (!t->all_finite()) return false;
        }
        return true;
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct AdamState {
    ModelParams first_moment;
    ModelParams second_moment;
    std::uint64_t step_count = 0;

    static AdamState for_params(const ModelParams& p) {
        return {ModelParams::zeros_like(p), ModelParams::zeros_like(p), 0};
    }

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Candidate pairs with aligned targets (1 = edge, 0 = non-edge).
struct EdgeBatch {
    std::vector<Edge> pairs;
    std::vector<double> targets;

    void add(const Edge& e, double target) {
        pairs.push_back(e);
        targets.push_back(target);
    }
    std::size_t size() const { return pairs.size(); }
};

inline ModelParams init_params(const ModelDims& dims, DecoderHead head, Rng& rng) {
    dims.validate();
    ModelParams p = ModelParams::zeros(dims, head);
    auto glorot = [&rng](Matrix& m) {
        const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        for (double& v : m.flat()) v = rng.uniform(-limit, limit);
    };
    glorot(p.w1);
    glorot(p.mlp_w1);
    glorot(p.mlp_w2);
    return p;
}

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

inline double sigmoid(double s) {
    if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

// log(1 + e^s) without overflow.
inline double softplus(double s) { return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s))); }

// Per-pair binary cross-entropy on a logit. Written as t*softplus(-s) + (1-t)*softplus(s),
// which equals softplus(s) - t*s but avoids cancellation for confident predictions.
inline double bce_term(double s, double t) {
    if (t == 1.0) return softplus(-s);
    if (t == 0.0) return softplus(s);
    return t * softplus(-s) + (1.0 - t) * softplus(s);
}

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EncoderCache {
    Matrix pre;  // A (X W1), before the activation
    Matrix z;
};

inline EncoderCache encode_with_cache(const FeatureMatrix& x, const CsrAdjacency& a_norm,
                                      const ModelParams& params) {
    if (x.cols() != params.w1.rows()) {
        throw std::invalid_argument("encode: feature dim " + std::to_string(x.cols()) +
                                    " != encoder input dim " + std::to_string(params.w1.rows()));
    }
    if (x.rows() != a_norm.num_nodes()) {
        throw std::invalid_argument("encode: feature rows != adjacency node count");
    }
    // A X W1 is evaluated as A (X W1): identical in exact arithmetic and far
    // cheaper when d >> d_v and X is sparse.
    Matrix xw = matmul(x, params.w1);
    if (!xw.all_finite()) throw NonFiniteError("encode: non-finite value after feature projection");
    EncoderCache cache{spmm(a_norm, xw), Matrix()};
    if (!cache.pre.all_finite()) throw NonFiniteError("encode: non-finite value after propagation");
    cache.z = Matrix(cache.pre.rows(), cache.pre.cols());
    auto src = cache.pre.flat();
    auto dst = cache.z.flat();
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = elu(src[k]);
    return cache;
}

// Z = ELU(A_norm X W1).
inline Matrix encode(const FeatureMatrix& x, const CsrAdjacency& a_norm, const ModelParams& params) {
    return encode_with_cache(x, a_norm, params).z;
}

namespace detail {

inline void check_pair(const Edge& e, std::size_t n) {
    if (e.src >= n || e.dst >= n) {
        throw std::out_of_range("edge_logits: pair (" + std::to_string(e.src) + "," +
                                std::to_string(e.dst) + ") out of range for n=" + std::to_string(n));
    }
}

inline void head_input(const Matrix& z, const Edge& e, DecoderHead head, std::vector<double>& h) {
    auto zi = z.row(e.src);
    auto zj = z.row(e.dst);
    if (head == DecoderHead::DotScalar) {
        double dot = 0.0;
        for (std::size_t c = 0; c < zi.size(); ++c) dot += zi[c] * zj[c];
        h.assign(1, dot);
    } else {
        h.resize(zi.size());
        for (std::size_t c = 0; c < zi.size(); ++c) h[c] = zi[c] * zj[c];
    }
}

// u = h * mlp_w1 + b1; returns the logit w2 . ReLU(u) + b2.
inline double mlp_forward(const ModelParams& p, std::span<const double> h, std::vector<double>& u) {
    const std::size_t m = p.mlp_b1.cols();
    u.assign(p.mlp_b1.flat().begin(), p.mlp_b1.flat().end());
    for (std::size_t k = 0; k < h.size(); ++k) {
        const double hk = h[k];
        if (hk == 0.0) continue;
        auto w = p.mlp_w1.row(k);
        for (std::size_t c = 0; c < m; ++c) u[c] += hk * w[c];
    }
    double logit = p.mlp_b2(0, 0);
    for (std::size_t c = 0; c < m; ++c) {
        if (u[c] > 0.0) logit += u[c] * p.mlp_w2(c, 0);
    }
    return logit;
}

}  // namespace detail

// One raw (pre-sigmoid) logit per pair.
inline std::vector<double> edge_logits(const Matrix& z, std::span<const Edge> pairs,
                                       const ModelParams& params, DecoderHead head) {
    if (params.mlp_w1.rows() != (head == DecoderHead::DotScalar ? 1 : z.cols())) {
        throw std::invalid_argument("edge_logits: decoder weights do not match the head variant");
    }
    std::vector<double> out;
    out.reserve(pairs.size());
    std::vector<double> h, u;
    for (const Edge& e : pairs) {
        detail::check_pair(e, z.rows());
        detail::head_input(z, e, head, h);
        out.push_back(detail::mlp_forward(params, h, u));
    }
    return out;
}

// Mean binary cross-entropy of sigmoid(logits) against targets.
inline double bce_loss(std::span<const double> logits, std::span<const double> targets) {
    if (logits.size() != targets.size()) throw std::invalid_argument("bce_loss: length mismatch");
    if (logits.empty()) throw std::invalid_argument("bce_loss: empty batch");
    double total = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        total += bce_term(logits[k], targets[k]);
    }
    return total / static_cast<double>(logits.size());
}

struct LossAndGrads {
    double loss = 0.0;
    ModelParams grads;
};

// Loss of the batch and its exact gradient with respect to every parameter.
inline LossAndGrads backward(const FeatureMatrix& x, const CsrAdjacency& a_norm, const EdgeBatch& batch,
                             const ModelParams& params, DecoderHead head) {
    if (batch.pairs.size() != batch.targets.size()) {
        throw std::invalid_argument("backward: pairs/targets length mismatch");
    }
    if (batch.pairs.empty()) throw std::invalid_argument("backward: empty batch");

    const EncoderCache enc = encode_with_cache(x, a_norm, params);
    const Matrix& z = enc.z;
    const std::size_t n = z.rows();
    const std::size_t m = params.mlp_b1.cols();
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    LossAndGrads out{0.0, ModelParams::zeros_like(params)};
    ModelParams& g = out.grads;
    Matrix dz(z.rows(), z.cols());

    std::vector<double> h, u, du(m), dh;
    double loss_sum = 0.0;
    for (std::size_t p = 0; p < batch.size(); ++p) {
        const Edge& e = batch.pairs[p];
        const double t = batch.targets[p];
        detail::check_pair(e, n);
        detail::head_input(z, e, head, h);
        const double s = detail::mlp_forward(params, h, u);
        loss_sum += bce_term(s, t);

        const double ds = (sigmoid(s) - t) * inv_n;
        g.mlp_b2(0, 0) += ds;
        for (std::size_t c = 0; c < m; ++c) {
            if (u[c] > 0.0) {
                g.mlp_w2(c, 0) += ds * u[c];
                du[c] = ds * params.mlp_w2(c, 0);
            } else {
                du[c] = 0.0;
            }
            g.mlp_b1(0, c) += du[c];
        }
        dh.assign(h.size(), 0.0);
        for (std::size_t k = 0; k < h.size(); ++k) {
            auto w = params.mlp_w1.row(k);
            auto gw = g.mlp_w1.row(k);
            double acc = 0.0;
            for (std::size_t c = 0; c < m; ++c) {
                gw[c] += h[k] * du[c];
                acc += w[c] * du[c];
            }
            dh[k] = acc;
        }

        auto zi = z.row(e.src);
        auto zj = z.row(e.dst);
        auto dzi = dz.row(e.src);
        auto dzj = dz.row(e.dst);
        for (std::size_t c = 0; c < zi.size(); ++c) {
            const double dhc = head == DecoderHead::DotScalar ? dh[0] : dh[c];
            dzi[c] += dhc * zj[c];
            dzj[c] += dhc * zi[c];
        }
    }
    out.loss = loss_sum * inv_n;

    // Through the activation, then W1 gradient = X^T (A^T dPre).
    auto pre = enc.pre.flat();
    auto dflat = dz.flat();
    for (std::size_t k = 0; k < dflat.size(); ++k) dflat[k] *= elu_grad(pre[k]);
    g.w1 = matmul_transposed_lhs(x, spmm_transposed(a_norm, dz));
    return out;
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// One bias-corrected Adam update over a flat tensor; `step` is the 1-based
// step index after incrementing.
inline void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                        std::span<double> v, std::uint64_t step, double lr,
                        const AdamConfig& cfg = {}) {
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t k = 0; k < param.size(); ++k) {
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
        param[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.epsilon);
    }
}

inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
    if (!grads.all_finite()) throw NonFiniteError("adam_step: non-finite gradient");
    auto ps = params.tensors();
    auto gs = grads.tensors();
    auto ms = state.first_moment.tensors();
    auto vs = state.second_moment.tensors();
    for (std::size_t t = 0; t < ps.size(); ++t) {
        if (ps[t]->rows() != gs[t]->rows() || ps[t]->cols() != gs[t]->cols() ||
            ms[t]->size() != ps[t]->size() || vs[t]->size() != ps[t]->size()) {
            throw std::invalid_argument(std::string("adam_step: shape mismatch in ") + ModelParams::names[t]);
        }
    }
    ++state.step_count;
    for (std::size_t t = 0; t < ps.size(); ++t) {
        adam_update(ps[t]->flat(), gs[t]->flat(), ms[t]->flat(), vs[t]->flat(), state.step_count, lr, cfg);
    }
}

// Checkpoints ---------------------------------------------------------------

inline constexpr const char* kCheckpointMagic = "CGCL1";

struct Checkpoint {
    ModelDims dims;
    DecoderHead head = DecoderHead::DotScalar;
    bool raw_adjacency = false;
    ModelParams params;
    AdamState adam;
    std::uint64_t seed = 0;
};

inline nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
}

inline nlohmann::json params_to_json(const ModelParams& p) {
    nlohmann::json j;
    auto ts = p.tensors();
    for (std::size_t t = 0; t < ts.size(); ++t) j[ModelParams::names[t]] = matrix_to_json(*ts[t]);
    return j;
}

inline ModelParams params_from_json(const nlohmann::json& j) {
    ModelParams p;
    auto ts = p.tensors();
    for (std::size_t t = 0; t < ts.size(); ++t) *ts[t] = matrix_from_json(j.at(ModelParams::names[t]));
    return p;
}

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
    return {
        {"magic", kCheckpointMagic},
        {"dims", {{"in_dim", c.dims.in_dim}, {"hidden_dim", c.dims.hidden_dim}, {"mlp_hidden", c.dims.mlp_hidden}}},
        {"head", to_string(c.head)},
        {"raw_adjacency", c.raw_adjacency},
        {"seed", c.seed},
        {"params", params_to_json(c.params)},
        {"adam",
         {{"step_count", c.adam.step_count},
          {"first_moment", params_to_json(c.adam.first_moment)},
          {"second_moment", params_to_json(c.adam.second_moment)}}},
    };
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("magic", std::string()) != kCheckpointMagic) {
        throw std::runtime_error("checkpoint: missing or unsupported magic (expected CGCL1)");
    }
    Checkpoint c;
    const auto& d = j.at("dims");
    c.dims = {d.at("in_dim").get<std::size_t>(), d.at("hidden_dim").get<std::size_t>(),
              d.at("mlp_hidden").get<std::size_t>()};
    c.dims.validate();
    c.head = parse_head(j.at("head").get<std::string>());
    c.raw_adjacency = j.at("raw_adjacency").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.params = params_from_json(j.at("params"));
    const auto& a = j.at("adam");
    c.adam.step_count = a.at("step_count").get<std::uint64_t>();
    c.adam.first_moment = params_from_json(a.at("first_moment"));
    c.adam.second_moment = params_from_json(a.at("second_moment"));

    const ModelParams expect = ModelParams::zeros(c.dims, c.head);
    auto want = expect.tensors();
    for (const ModelParams* p : {&c.params, &c.adam.first_moment, &c.adam.second_moment}) {
        auto got = p->tensors();
        for (std::size_t t = 0; t < got.size(); ++t) {
            if (got[t]->rows() != want[t]->rows() || got[t]->cols() != want[t]->cols()) {
                throw std::runtime_error(std::string("checkpoint: tensor ") + ModelParams::names[t] +
                                         " has the wrong shape");
            }
        }
    }
    return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << checkpoint_to_json(c).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return checkpoint_from_json(nlohmann::json::parse(in));
}

}  // namespace cgcl
