#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "cgcl/model.hpp"
#include "gradcheck.hpp"

using namespace cgcl;

namespace {

ModelParams dot_params_example() {
    // mlp_w1 = [[1, -1]], b1 = 0, mlp_w2 = [1, 1]^T, b2 = 0, on d_v = 4.
    ModelParams p = ModelParams::zeros(ModelDims::make(2, 4), DecoderHead::DotScalar);
    p.mlp_w1(0, 0) = 1.0;
    p.mlp_w1(0, 1) = -1.0;
    p.mlp_w2(0, 0) = 1.0;
    p.mlp_w2(1, 0) = 1.0;
    return p;
}

}  // namespace

TEST(ModelDims, HalvesHiddenWidth) {
    EXPECT_EQ(ModelDims::make(10, 256).mlp_hidden, 128u);
    EXPECT_EQ(ModelDims::make(10, 5).mlp_hidden, 2u);
    EXPECT_THROW(ModelDims::make(10, 1), std::invalid_argument);
    EXPECT_THROW(ModelDims::make(0, 4), std::invalid_argument);
}

TEST(InitParams, ReproducibleGlorotWithZeroBiases) {
    const ModelDims dims = ModelDims::make(8, 16);
    Rng a(42), b(42), c(43);
    const ModelParams pa = init_params(dims, DecoderHead::Hadamard, a);
    EXPECT_EQ(pa, init_params(dims, DecoderHead::Hadamard, b));
    EXPECT_NE(pa, init_params(dims, DecoderHead::Hadamard, c));
    for (double v : pa.mlp_b1.flat()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(pa.mlp_b2(0, 0), 0.0);
    EXPECT_EQ(pa.mlp_w1.rows(), 16u);
    const double limit = std::sqrt(6.0 / (8 + 16));
    for (double v : pa.w1.flat()) EXPECT_LE(std::abs(v), limit);
}

TEST(InitParams, EncoderWeightsCenteredAtZero) {
    const ModelDims dims = ModelDims::make(8, 16);
    const double limit = std::sqrt(6.0 / (8 + 16));
    double sum = 0.0;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const ModelParams p = init_params(dims, DecoderHead::DotScalar, rng);
        for (double v : p.w1.flat()) {
            sum += v;
            ++count;
        }
    }
    const double se = limit / std::sqrt(3.0 * static_cast<double>(count));
    EXPECT_LE(std::abs(sum / static_cast<double>(count)), 3.0 * se);
}

TEST(Encode, ZeroWeightsGiveZeroEmbeddings) {
    ModelParams p = ModelParams::zeros(ModelDims::make(3, 4), DecoderHead::DotScalar);
    Rng rng(1);
    FeatureMatrix x(5, 3);
    for (double& v : x.flat()) v = rng.uniform(-1, 1);
    const CsrAdjacency a = normalize_symmetric(build_adjacency(EdgeList(5, {{0, 1}, {2, 3}})));
    EXPECT_EQ(encode(x, a, p), Matrix(5, 4));
}

TEST(Encode, IsolatedNodeHandEvaluation) {
    ModelParams p = ModelParams::zeros(ModelDims::make(2, 2), DecoderHead::DotScalar);
    p.w1 = Matrix(2, 1, std::vector<double>{2.0, 3.0});
    const CsrAdjacency a = normalize_symmetric(build_adjacency(EdgeList(1, {})));
    const Matrix z = encode(FeatureMatrix(1, 2, std::vector<double>{1.0, 0.0}), a, p);
    ASSERT_EQ(z.rows(), 1u);
    ASSERT_EQ(z.cols(), 1u);
    EXPECT_EQ(z(0, 0), 2.0);
}

TEST(Encode, LowerBoundAndNegativeBranch) {
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        auto prob = gradcheck::random_problem(rng, DecoderHead::DotScalar);
        for (double& v : prob.params.w1.flat()) v *= 50.0;
        const Matrix z = encode(prob.x, prob.adj, prob.params);
        for (double v : z.flat()) EXPECT_GE(v, -1.0);
    }
    ModelParams p = ModelParams::zeros(ModelDims::make(1, 2), DecoderHead::DotScalar);
    p.w1(0, 0) = -1.0;
    const CsrAdjacency a = normalize_symmetric(build_adjacency(EdgeList(1, {})));
    EXPECT_DOUBLE_EQ(encode(FeatureMatrix(1, 1, 1.0), a, p)(0, 0), std::exp(-1.0) - 1.0);
}

TEST(Encode, ShapeAndFiniteChecks) {
    ModelParams p = ModelParams::zeros(ModelDims::make(3, 4), DecoderHead::DotScalar);
    const CsrAdjacency a = normalize_symmetric(build_adjacency(EdgeList(2, {{0, 1}})));
    EXPECT_THROW(encode(FeatureMatrix(2, 2), a, p), std::invalid_argument);
    EXPECT_THROW(encode(FeatureMatrix(3, 3), a, p), std::invalid_argument);
    FeatureMatrix bad(2, 3, 1.0);
    p.w1(0, 0) = std::numeric_limits<double>::infinity();
    try {
        encode(bad, a, p);
        FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& e) {
        EXPECT_NE(std::string(e.what()).find("encode"), std::string::npos);
    }
}

TEST(Encode, PermutationEquivariance) {
    Rng rng(3);
    auto prob = gradcheck::random_problem(rng, DecoderHead::DotScalar);
    const std::size_t n = prob.x.rows();
    std::vector<NodeId> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t k = n; k > 1; --k) std::swap(perm[k - 1], perm[rng.below(k)]);

    const EdgeList edges = extract_edges(prob.adj);  // includes diagonal? no: i < j only
    std::vector<Edge> moved;
    for (const Edge& e : edges) moved.push_back(make_canonical(perm[e.src], perm[e.dst]));
    const CsrAdjacency adj2 = normalize_symmetric(build_adjacency(EdgeList(n, std::move(moved))));
    FeatureMatrix x2(n, prob.x.cols());
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(prob.x.row(i).begin(), prob.x.row(i).end(), x2.row(perm[i]).begin());
    }
    const Matrix z = encode(prob.x, prob.adj, prob.params);
    const Matrix z2 = encode(x2, adj2, prob.params);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < z.cols(); ++c) EXPECT_NEAR(z2(perm[i], c), z(i, c), 1e-14);
    }
}

TEST(EdgeLogits, ZeroEmbeddingsCollapseToConstant) {
    Rng rng(4);
    for (DecoderHead head : {DecoderHead::DotScalar, DecoderHead::Hadamard}) {
        ModelParams p = init_params(ModelDims::make(3, 4), head, rng);
        for (double& v : p.mlp_b1.flat()) v = rng.uniform(-1, 1);
        p.mlp_b2(0, 0) = 0.3;
        const Matrix z(6, 4);
        const std::vector<Edge> pairs{{0, 1}, {2, 5}, {3, 4}};
        const auto logits = edge_logits(z, pairs, p, head);
        double want = p.mlp_b2(0, 0);
        for (std::size_t c = 0; c < 2; ++c) want += std::max(p.mlp_b1(0, c), 0.0) * p.mlp_w2(c, 0);
        for (double l : logits) EXPECT_DOUBLE_EQ(l, want);
    }
}

TEST(EdgeLogits, DotScalarHandEvaluation) {
    const ModelParams p = dot_params_example();
    Matrix z(2, 4);
    // z_0 = z_1 with <z_0, z_1> = 2, matching the [1, 1] example on a wider embedding.
    z(0, 0) = z(0, 1) = z(1, 0) = z(1, 1) = 1.0;
    const auto logits = edge_logits(z, std::vector<Edge>{{0, 1}}, p, DecoderHead::DotScalar);
    EXPECT_EQ(logits[0], 2.0);
}

TEST(EdgeLogits, SymmetricInPairOrder) {
    Rng rng(5);
    for (DecoderHead head : {DecoderHead::DotScalar, DecoderHead::Hadamard}) {
        for (int trial = 0; trial < 10; ++trial) {
            auto prob = gradcheck::random_problem(rng, head);
            const Matrix z = encode(prob.x, prob.adj, prob.params);
            std::vector<Edge> fwd, rev;
            for (const Edge& e : prob.batch.pairs) {
                fwd.push_back(e);
                rev.push_back({e.dst, e.src});
            }
            EXPECT_EQ(edge_logits(z, fwd, prob.params, head), edge_logits(z, rev, prob.params, head));
        }
    }
}

TEST(EdgeLogits, OutOfRangeAndHeadMismatch) {
    Rng rng(6);
    const ModelParams p = init_params(ModelDims::make(3, 4), DecoderHead::DotScalar, rng);
    const Matrix z(3, 4);
    EXPECT_THROW(edge_logits(z, std::vector<Edge>{{0, 3}}, p, DecoderHead::DotScalar), std::out_of_range);
    EXPECT_THROW(edge_logits(z, std::vector<Edge>{{0, 1}}, p, DecoderHead::Hadamard), std::invalid_argument);
}

TEST(BceLoss, KnownValues) {
    const std::vector<double> zero{0.0}, one{1.0};
    EXPECT_DOUBLE_EQ(bce_loss(zero, one), std::log(2.0));
    const std::vector<double> big{20.0};
    // log(1 + e^-20) to 40 digits: 2.0611536203143807032e-9
    EXPECT_NEAR(bce_loss(big, one), 2.0611536203143807e-9, 1e-24);
    const std::vector<double> huge{-1000.0};
    EXPECT_DOUBLE_EQ(bce_loss(huge, one), 1000.0);
    EXPECT_THROW(bce_loss(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
    EXPECT_THROW(bce_loss(zero, std::vector<double>{1.0, 0.0}), std::invalid_argument);
}

TEST(BceLoss, FlipSymmetryAndNonNegativity) {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> s(5), t(5), ns(5), nt(5);
        for (std::size_t k = 0; k < 5; ++k) {
            s[k] = rng.uniform(-30, 30);
            t[k] = rng.bernoulli(0.5) ? 1.0 : 0.0;
            ns[k] = -s[k];
            nt[k] = 1.0 - t[k];
        }
        EXPECT_NEAR(bce_loss(s, t), bce_loss(ns, nt), 1e-12);
        EXPECT_GE(bce_loss(s, t), 0.0);
    }
}

TEST(Backward, LossMatchesForward) {
    Rng rng(8);
    for (DecoderHead head : {DecoderHead::DotScalar, DecoderHead::Hadamard}) {
        auto prob = gradcheck::random_problem(rng, head);
        const auto lg = backward(prob.x, prob.adj, prob.batch, prob.params, head);
        EXPECT_DOUBLE_EQ(lg.loss, gradcheck::forward_loss(prob, prob.params));
    }
}

TEST(Backward, MatchesFiniteDifferences) {
    Rng rng(9);
    for (DecoderHead head : {DecoderHead::DotScalar, DecoderHead::Hadamard}) {
        for (int trial = 0; trial < 15; ++trial) {
            const auto prob = gradcheck::random_problem(rng, head);
            EXPECT_LT(gradcheck::max_relative_gradient_error(prob), 1e-4) << to_string(head) << " trial " << trial;
        }
    }
}

TEST(Backward, SixNodeExample) {
    // 6 nodes, d = 4, d_v = 4, both heads.
    Rng rng(10);
    for (DecoderHead head : {DecoderHead::DotScalar, DecoderHead::Hadamard}) {
        gradcheck::GradProblem prob;
        prob.head = head;
        std::vector<Edge> e{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 5}, {1, 4}};
        prob.adj = normalize_symmetric(build_adjacency(EdgeList(6, std::move(e))));
        prob.x = FeatureMatrix(6, 4);
        for (double& v : prob.x.flat()) v = rng.uniform(-1, 1);
        prob.params = init_params(ModelDims::make(4, 4), head, rng);
        for (double& v : prob.params.mlp_b1.flat()) v = rng.uniform(-0.1, 0.1);
        prob.batch.add({0, 1}, 1);
        prob.batch.add({2, 3}, 1);
        prob.batch.add({0, 3}, 0);
        prob.batch.add({2, 5}, 0);
        EXPECT_LT(gradcheck::max_relative_gradient_error(prob), 1e-4);
    }
}

TEST(Backward, ZeroLearningSignal) {
    Rng rng(11);
    for (DecoderHead head : {DecoderHead::DotScalar, DecoderHead::Hadamard}) {
        auto prob = gradcheck::random_problem(rng, head);
        const Matrix z = encode(prob.x, prob.adj, prob.params);
        const auto logits = edge_logits(z, prob.batch.pairs, prob.params, head);
        for (std::size_t k = 0; k < logits.size(); ++k) prob.batch.targets[k] = sigmoid(logits[k]);
        const auto lg = backward(prob.x, prob.adj, prob.batch, prob.params, head);
        for (const Matrix* t : lg.grads.tensors()) {
            for (double v : t->flat()) EXPECT_EQ(v, 0.0);
        }
    }
}

TEST(Backward, MeanNormalization) {
    // Doubling the batch leaves the mean loss and its gradient unchanged,
    // i.e. gradients scale as 1/N relative to the summed loss.
    Rng rng(12);
    auto prob = gradcheck::random_problem(rng, DecoderHead::Hadamard);
    auto doubled = prob;
    for (std::size_t k = 0; k < prob.batch.size(); ++k) doubled.batch.add(prob.batch.pairs[k], prob.batch.targets[k]);
    const auto a = backward(prob.x, prob.adj, prob.batch, prob.params, prob.head);
    const auto b = backward(doubled.x, doubled.adj, doubled.batch, doubled.params, doubled.head);
    EXPECT_NEAR(a.loss, b.loss, 1e-14);
    auto ga = a.grads.tensors();
    auto gb = b.grads.tensors();
    for (std::size_t t = 0; t < ga.size(); ++t) {
        for (std::size_t k = 0; k < ga[t]->size(); ++k) EXPECT_NEAR(ga[t]->flat()[k], gb[t]->flat()[k], 1e-13);
    }
}

TEST(Backward, EmptyBatchIsAnError) {
    Rng rng(13);
    auto prob = gradcheck::random_problem(rng, DecoderHead::DotScalar);
    prob.batch = EdgeBatch{};
    EXPECT_THROW(backward(prob.x, prob.adj, prob.batch, prob.params, prob.head), std::invalid_argument);
}

TEST(Adam, FirstStepOnScalar) {
    std::vector<double> param{0.0}, grad{1.0}, m{0.0}, v{0.0};
    adam_update(param, grad, m, v, 1, 0.1);
    EXPECT_NEAR(param[0], -0.1, 1e-8);
    EXPECT_DOUBLE_EQ(m[0], 0.1);
    EXPECT_DOUBLE_EQ(v[0], 0.001);
}

TEST(Adam, ZeroGradientsLeaveFreshParamsUnchanged) {
    Rng rng(14);
    ModelParams p = init_params(ModelDims::make(3, 4), DecoderHead::DotScalar, rng);
    const ModelParams before = p;
    AdamState state = AdamState::for_params(p);
    adam_step(p, ModelParams::zeros_like(p), state, 0.01);
    EXPECT_EQ(p, before);
    EXPECT_EQ(state.step_count, 1u);

    // Existing moments decay by beta1 / beta2 under zero gradients.
    for (Matrix* t : state.first_moment.tensors()) std::fill(t->flat().begin(), t->flat().end(), 1.0);
    for (Matrix* t : state.second_moment.tensors()) std::fill(t->flat().begin(), t->flat().end(), 1.0);
    adam_step(p, ModelParams::zeros_like(p), state, 0.01);
    EXPECT_DOUBLE_EQ(state.first_moment.w1(0, 0), 0.9);
    EXPECT_DOUBLE_EQ(state.second_moment.w1(0, 0), 0.999);
}

TEST(Adam, ResumedStateMatchesContinuousRun) {
    Rng rng(15);
    auto prob = gradcheck::random_problem(rng, DecoderHead::DotScalar);
    ModelParams p = prob.params;
    AdamState s = AdamState::for_params(p);
    auto g1 = backward(prob.x, prob.adj, prob.batch, p, prob.head).grads;
    adam_step(p, g1, s, 0.01);
    ModelParams p_copy = p;
    AdamState s_copy = s;
    auto g2 = backward(prob.x, prob.adj, prob.batch, p, prob.head).grads;
    adam_step(p, g2, s, 0.01);
    adam_step(p_copy, g2, s_copy, 0.01);
    EXPECT_EQ(p, p_copy);
    EXPECT_EQ(s, s_copy);
    EXPECT_EQ(s.step_count, 2u);
}

TEST(Adam, RejectsNonFiniteGradient) {
    Rng rng(16);
    ModelParams p = init_params(ModelDims::make(3, 4), DecoderHead::DotScalar, rng);
    AdamState s = AdamState::for_params(p);
    ModelParams g = ModelParams::zeros_like(p);
    g.mlp_b2(0, 0) = std::nan("");
    EXPECT_THROW(adam_step(p, g, s, 0.01), NonFiniteError);
}

TEST(Checkpoint, JsonRoundTripIsExact) {
    Rng rng(17);
    Checkpoint c;
    c.dims = ModelDims::make(5, 6);
    c.head = DecoderHead::Hadamard;
    c.raw_adjacency = true;
    c.seed = 1234567890123ull;
    c.params = init_params(c.dims, c.head, rng);
    c.adam = AdamState::for_params(c.params);
    auto prob_grads = ModelParams::zeros_like(c.params);
    for (Matrix* t : prob_grads.tensors())
        for (double& v : t->flat()) v = rng.uniform(-1, 1);
    adam_step(c.params, prob_grads, c.adam, 0.01);

    const auto path = std::filesystem::temp_directory_path() / "cgcl_ckpt_test.json";
    save_checkpoint(c, path);
    const Checkpoint back = load_checkpoint(path);
    std::filesystem::remove(path);
    EXPECT_EQ(back.dims, c.dims);
    EXPECT_EQ(back.head, c.head);
    EXPECT_EQ(back.raw_adjacency, c.raw_adjacency);
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.params, c.params);
    EXPECT_EQ(back.adam, c.adam);
    EXPECT_EQ(checkpoint_to_json(c).at("magic"), "CGCL1");
}

TEST(Checkpoint, RejectsWrongMagicAndShapes) {
    Rng rng(18);
    Checkpoint c;
    c.dims = ModelDims::make(3, 4);
    c.params = init_params(c.dims, c.head, rng);
    c.adam = AdamState::for_params(c.params);
    auto j = checkpoint_to_json(c);
    auto bad = j;
    bad["magic"] = "CGCL0";
    EXPECT_THROW(checkpoint_from_json(bad), std::runtime_error);
    auto wrong_shape = j;
    wrong_shape["dims"]["hidden_dim"] = 8;
    wrong_shape["dims"]["mlp_hidden"] = 4;
    EXPECT_THROW(checkpoint_from_json(wrong_shape), std::runtime_error);
}

TEST(GradientOracle, ReferenceForwardAgreesWithLibrary) {
    Rng rng(19);
    for (DecoderHead head : {DecoderHead::DotScalar, DecoderHead::Hadamard}) {
        for (int trial = 0; trial < 10; ++trial) {
            const auto prob = gradcheck::random_problem(rng, head);
            const double lib = gradcheck::forward_loss(prob, prob.params);
            const auto ref = gradcheck::reference_loss(prob, gradcheck::to_real(prob.params));
            EXPECT_NEAR(lib, static_cast<double>(ref), 1e-13 * std::max(1.0, lib));
        }
    }
}
