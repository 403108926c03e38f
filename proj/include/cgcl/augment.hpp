#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "cgcl/graph.hpp"
#include "cgcl/rng.hpp"

namespace cgcl {

// Two complementary augmented views of one edge set, each with its
// normalized propagation operator.
struct ViewPair {
    EdgeList view1;
    EdgeList view2;
    CsrAdjacency adj1;
    CsrAdjacency adj2;

    const EdgeList& view(int v) const { return v == 1 ? view1 : view2; }
    const CsrAdjacency& adj(int v) const { return v == 1 ? adj1 : adj2; }
};

inline CsrAdjacency propagation_operator(const EdgeList& edges, bool raw_adjacency = false) {
    CsrAdjacency adj = build_adjacency(edges);
    return raw_adjacency ? adj : normalize_symmetric(adj);
}

// Each edge lands in view1 with probability 1/2, otherwise in view2.
inline ViewPair bernoulli_split(const EdgeList& train_edges, Rng& rng, bool raw_adjacency = false) {
    std::vector<Edge> first, second;
    first.reserve(train_edges.size() / 2 + 1);
    second.reserve(train_edges.size() / 2 + 1);
    for (const Edge& e : train_edges) {
        (rng.bernoulli(0.5) ? first : second).push_back(e);
    }
    const std::size_t n = train_edges.num_nodes();
    ViewPair views;
    views.view1 = EdgeList(n, std::move(first));
    views.view2 = EdgeList(n, std::move(second));
    views.adj1 = propagation_operator(views.view1, raw_adjacency);
    views.adj2 = propagation_operator(views.view2, raw_adjacency);
    return views;
}

// Uniform non-edges by rejection, with replacement. Throws once 100 * count
// draws have been spent.
inline std::vector<Edge> sample_negatives(std::size_t count, const EdgeSet& forbidden,
                                          std::size_t num_nodes, Rng& rng) {
    std::vector<Edge> out;
    out.reserve(count);
    std::size_t budget = 100 * count;
    while (out.size() < count) {
        if (budget == 0) {
            throw std::runtime_error("sample_negatives: rejection budget exhausted after " +
                                     std::to_string(100 * count) + " draws (graph too dense)");
        }
        --budget;
        const auto a = static_cast<NodeId>(rng.below(num_nodes));
        const auto b = static_cast<NodeId>(rng.below(num_nodes));
        if (a == b) continue;
        const Edge e = make_canonical(a, b);
        if (forbidden.contains(e)) continue;
        out.push_back(e);
    }
    return out;
}

}  // namespace cgcl
