#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace cgcl {

using NodeId = std::uint32_t;

struct Edge {
    NodeId src = 0;
    NodeId dst = 0;

    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

inline Edge make_canonical(NodeId a, NodeId b) {
    return a < b ? Edge{a, b} : Edge{b, a};
}

// Undirected edge set in canonical form: src < dst, no duplicates. The
// constructor sorts; use EdgeList::canonicalize to accept arbitrary input.
class EdgeList {
public:
    EdgeList() = default;

    EdgeList(std::size_t num_nodes, std::vector<Edge> edges)
        : num_nodes_(num_nodes), edges_(std::move(edges)) {
        std::sort(edges_.begin(), edges_.end());
        for (std::size_t k = 0; k < edges_.size(); ++k) {
            const Edge& e = edges_[k];
            if (e.src >= e.dst) {
                throw std::invalid_argument("EdgeList: edge (" + std::to_string(e.src) + "," +
                                            std::to_string(e.dst) + ") is not canonical");
            }
            if (e.dst >= num_nodes_) {
                throw std::out_of_range("EdgeList: endpoint " + std::to_string(e.dst) +
                                        " >= num_nodes " + std::to_string(num_nodes_));
            }
            if (k > 0 && edges_[k - 1] == e) {
                throw std::invalid_argument("EdgeList: duplicate edge (" + std::to_string(e.src) +
                                            "," + std::to_string(e.dst) + ")");
            }
        }
    }

    // Orients every pair, drops self-loops and duplicates.
    static EdgeList canonicalize(std::size_t num_nodes, std::span<const Edge> raw) {
        std::vector<Edge> out;
        out.reserve(raw.size());
        for (const Edge& e : raw) {
            if (e.src == e.dst) continue;
            out.push_back(make_canonical(e.src, e.dst));
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return EdgeList(num_nodes, std::move(out));
    }

    std::size_t num_nodes() const { return num_nodes_; }
    std::size_t size() const { return edges_.size(); }
    bool empty() const { return edges_.empty(); }
    const std::vector<Edge>& edges() const { return edges_; }
    const Edge& operator[](std::size_t k) const { return edges_[k]; }
    auto begin() const { return edges_.begin(); }
    auto end() const { return edges_.end(); }

    bool contains(const Edge& e) const {
        return std::binary_search(edges_.begin(), edges_.end(), make_canonical(e.src, e.dst));
    }

    friend bool operator==(const EdgeList&, const EdgeList&) = default;

private:
    std::size_t num_nodes_ = 0;
    std::vector<Edge> edges_;
};

// Hash set of canonical pairs, used for membership tests during sampling.
class EdgeSet {
public:
    EdgeSet() = default;
    explicit EdgeSet(const EdgeList& edges) {
        set_.reserve(edges.size() * 2);
        for (const Edge& e : edges) set_.insert(key(e));
    }

    bool insert(const Edge& e) { return set_.insert(key(make_canonical(e.src, e.dst))).second; }
    bool contains(const Edge& e) const {
        return set_.count(key(make_canonical(e.src, e.dst))) != 0;
    }
    std::size_t size() const { return set_.size(); }

private:
    static std::uint64_t key(const Edge& e) {
        return (static_cast<std::uint64_t>(e.src) << 32) | e.dst;
    }
    std::unordered_set<std::uint64_t> set_;
};

// Dense row-major matrix of doubles. Doubles as FeatureMatrix and as the
// parameter tensor type of the model.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument("Matrix: data size does not match shape");
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

using FeatureMatrix = Matrix;

// a (n x k) * b (k x m). Zero entries of `a` are skipped, which makes the
// product cheap for sparse bag-of-words features.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimension mismatch (" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + ")");
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double x = a(i, k);
            if (x == 0.0) continue;
            auto src = b.row(k);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += x * src[c];
        }
    }
    return out;
}

// a^T * b for a (k x n), b (k x m).
inline Matrix matmul_transposed_lhs(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("matmul_transposed_lhs: row count mismatch");
    }
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto src = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double x = a(k, i);
            if (x == 0.0) continue;
            auto dst = out.row(i);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += x * src[c];
        }
    }
    return out;
}

struct DegreeVector {
    std::vector<double> degrees;
};

class CsrAdjacency {
public:
    CsrAdjacency() : row_offsets_{0} {}

    CsrAdjacency(std::size_t num_nodes, std::vector<std::size_t> row_offsets,
                 std::vector<NodeId> col_indices, std::vector<double> values)
        : num_nodes_(num_nodes),
          row_offsets_(std::move(row_offsets)),
          col_indices_(std::move(col_indices)),
          values_(std::move(values)) {
        if (row_offsets_.size() != num_nodes_ + 1 || row_offsets_.front() != 0 ||
            row_offsets_.back() != col_indices_.size() || values_.size() != col_indices_.size()) {
            throw std::invalid_argument("CsrAdjacency: inconsistent array lengths");
        }
    }

    std::size_t num_nodes() const { return num_nodes_; }
    std::size_t nnz() const { return col_indices_.size(); }
    const std::vector<std::size_t>& row_offsets() const { return row_offsets_; }
    const std::vector<NodeId>& col_indices() const { return col_indices_; }
    const std::vector<double>& values() const { return values_; }

    std::span<const NodeId> neighbors(NodeId i) const {
        return {col_indices_.data() + row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]};
    }
    std::span<const double> row_values(NodeId i) const {
        return {values_.data() + row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]};
    }

    // Stored value at (i, j), or 0 when the entry is structurally absent.
    double at(NodeId i, NodeId j) const {
        auto nbrs = neighbors(i);
        auto it = std::lower_bound(nbrs.begin(), nbrs.end(), j);
        if (it == nbrs.end() || *it != j) return 0.0;
        return row_values(i)[static_cast<std::size_t>(it - nbrs.begin())];
    }

    DegreeVector degrees() const {
        DegreeVector d{std::vector<double>(num_nodes_, 0.0)};
        for (NodeId i = 0; i < num_nodes_; ++i) {
            for (double v : row_values(i)) d.degrees[i] += v;
        }
        return d;
    }

    Matrix to_dense() const {
        Matrix m(num_nodes_, num_nodes_);
        for (NodeId i = 0; i < num_nodes_; ++i) {
            auto nbrs = neighbors(i);
            auto vals = row_values(i);
            for (std::size_t k = 0; k < nbrs.size(); ++k) m(i, nbrs[k]) = vals[k];
        }
        return m;
    }

    friend bool operator==(const CsrAdjacency&, const CsrAdjacency&) = default;

private:
    std::size_t num_nodes_ = 0;
    std::vector<std::size_t> row_offsets_;
    std::vector<NodeId> col_indices_;
    std::vector<double> values_;
};

inline CsrAdjacency build_adjacency(const EdgeList& edges) {
    const std::size_t n = edges.num_nodes();
    if (n == 0) throw std::invalid_argument("build_adjacency: num_nodes must be >= 1");

    std::vector<std::size_t> offsets(n + 1, 0);
    for (const Edge& e : edges) {
        if (e.src >= n || e.dst >= n) {
            throw std::out_of_range("build_adjacency: endpoint out of range for n=" +
                                    std::to_string(n));
        }
        ++offsets[e.src + 1];
        ++offsets[e.dst + 1];
    }
    for (std::size_t i = 0; i < n; ++i) offsets[i + 1] += offsets[i];

    // Canonical edges arrive sorted by (src, dst), so filling (src -> dst)
    // and (dst -> src) in that order leaves every row sorted ascending.
    std::vector<NodeId> cols(offsets.back());
    std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
    for (const Edge& e : edges) cols[cursor[e.dst]++] = e.src;
    for (const Edge& e : edges) cols[cursor[e.src]++] = e.dst;
    std::vector<double> vals(cols.size(), 1.0);
    return CsrAdjacency(n, std::move(offsets), std::move(cols), std::move(vals));
}

// Upper-triangle entries of a symmetric adjacency, as a canonical EdgeList.
inline EdgeList extract_edges(const CsrAdjacency& adj) {
    std::vector<Edge> out;
    for (NodeId i = 0; i < adj.num_nodes(); ++i) {
        for (NodeId j : adj.neighbors(i)) {
            if (i < j) out.push_back({i, j});
        }
    }
    return EdgeList(adj.num_nodes(), std::move(out));
}

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
inline CsrAdjacency normalize_symmetric(const CsrAdjacency& adj) {
    const std::size_t n = adj.num_nodes();
    std::vector<double> inv_sqrt(n);
    for (NodeId i = 0; i < n; ++i) {
        double d = 1.0;
        for (double v : adj.row_values(i)) d += v;
        inv_sqrt[i] = 1.0 / std::sqrt(d);
    }

    std::vector<std::size_t> offsets(n + 1, 0);
    std::vector<NodeId> cols;
    std::vector<double> vals;
    cols.reserve(adj.nnz() + n);
    vals.reserve(adj.nnz() + n);
    for (NodeId i = 0; i < n; ++i) {
        auto nbrs = adj.neighbors(i);
        auto rv = adj.row_values(i);
        bool diag_done = false;
        for (std::size_t k = 0; k <= nbrs.size(); ++k) {
            if (!diag_done && (k == nbrs.size() || nbrs[k] > i)) {
                cols.push_back(i);
                vals.push_back(inv_sqrt[i] * inv_sqrt[i]);
                diag_done = true;
            }
            if (k == nbrs.size()) break;
            const NodeId j = nbrs[k];
            if (j == i) {
                throw std::invalid_argument("normalize_symmetric: input already has a self-loop");
            }
            cols.push_back(j);
            vals.push_back(rv[k] * inv_sqrt[i] * inv_sqrt[j]);
        }
        offsets[i + 1] = cols.size();
    }
    return CsrAdjacency(n, std::move(offsets), std::move(cols), std::move(vals));
}

// Sparse-dense product adj * dense. Rows are accumulated in stored column
// order, so results are bitwise deterministic.
inline Matrix spmm(const CsrAdjacency& adj, const Matrix& dense) {
    if (adj.num_nodes() != dense.rows()) {
        throw std::invalid_argument("spmm: adjacency has " + std::to_string(adj.num_nodes()) +
                                    " nodes but dense operand has " +
                                    std::to_string(dense.rows()) + " rows");
    }
    Matrix out(dense.rows(), dense.cols());
    for (NodeId i = 0; i < adj.num_nodes(); ++i) {
        auto dst = out.row(i);
        auto nbrs = adj.neighbors(i);
        auto vals = adj.row_values(i);
        for (std::size_t k = 0; k < nbrs.size(); ++k) {
            const double w = vals[k];
            auto src = dense.row(nbrs[k]);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w * src[c];
        }
    }
    return out;
}

// adj^T * dense, without assuming symmetry.
inline Matrix spmm_transposed(const CsrAdjacency& adj, const Matrix& dense) {
    if (adj.num_nodes() != dense.rows()) {
        throw std::invalid_argument("spmm_transposed: dimension mismatch");
    }
    Matrix out(dense.rows(), dense.cols());
    for (NodeId i = 0; i < adj.num_nodes(); ++i) {
        auto src = dense.row(i);
        auto nbrs = adj.neighbors(i);
        auto vals = adj.row_values(i);
        for (std::size_t k = 0; k < nbrs.size(); ++k) {
            auto dst = out.row(nbrs[k]);
            const double w = vals[k];
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w * src[c];
        }
    }
    return out;
}

}  // namespace cgcl
