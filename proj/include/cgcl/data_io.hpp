#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "cgcl/graph.hpp"
#include "cgcl/rng.hpp"

namespace cgcl {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct RawDataset {
    FeatureMatrix features;
    EdgeList edges;
    std::optional<std::vector<int>> node_labels;
    // Citations dropped because an endpoint had no content row.
    std::size_t skipped_edges = 0;

    std::size_t num_nodes() const { return edges.num_nodes(); }
};

struct DatasetSplit {
    EdgeList train_edges;
    EdgeList val_pos;
    EdgeList val_neg;
    EdgeList test_pos;
    EdgeList test_neg;
    std::size_t num_nodes = 0;
    std::uint64_t seed = 0;

    friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view tok) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::optional<std::uint64_t> parse_uint(std::string_view tok) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
    return v;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return in;
}

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace detail

// Planetoid-style `.content` / `.cites` pair. Node ids are assigned in the
// order rows appear in the content file; labels likewise.
inline RawDataset load_citation(const std::filesystem::path& content_path,
                                const std::filesystem::path& cites_path) {
    const std::string content_name = content_path.string();
    std::ifstream content = detail::open_input(content_path);

    std::unordered_map<std::string, NodeId> id_of;
    std::unordered_map<std::string, int> label_of;
    std::vector<double> feats;
    std::vector<int> labels;
    std::size_t dim = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(content, line)) {
        ++lineno;
        auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        if (toks.size() < 3) throw ParseError(content_name, lineno, "expected id, features, label");
        const std::size_t d = toks.size() - 2;
        if (id_of.empty()) dim = d;
        if (d != dim) {
            throw ParseError(content_name, lineno,
                             "feature dimension " + std::to_string(d) + " != " + std::to_string(dim));
        }
        std::string id(toks.front());
        if (id_of.count(id)) throw ParseError(content_name, lineno, "duplicate node id '" + id + "'");
        id_of.emplace(id, static_cast<NodeId>(id_of.size()));
        for (std::size_t k = 1; k + 1 < toks.size(); ++k) {
            auto v = detail::parse_double(toks[k]);
            if (!v) throw ParseError(content_name, lineno, "bad feature value '" + std::string(toks[k]) + "'");
            feats.push_back(*v);
        }
        std::string label(toks.back());
        auto [it, inserted] = label_of.emplace(label, static_cast<int>(label_of.size()));
        labels.push_back(it->second);
    }
    const std::size_t n = id_of.size();
    if (n == 0) throw ParseError(content_name, lineno, "no nodes");

    const std::string cites_name = cites_path.string();
    std::ifstream cites = detail::open_input(cites_path);
    std::vector<Edge> raw;
    std::size_t skipped = 0;
    lineno = 0;
    while (std::getline(cites, line)) {
        ++lineno;
        auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        if (toks.size() != 2) throw ParseError(cites_name, lineno, "expected two ids");
        auto a = id_of.find(std::string(toks[0]));
        auto b = id_of.find(std::string(toks[1]));
        if (a == id_of.end() || b == id_of.end()) {
            ++skipped;
            continue;
        }
        raw.push_back({a->second, b->second});
    }

    RawDataset out;
    out.features = FeatureMatrix(n, dim, std::move(feats));
    out.edges = EdgeList::canonicalize(n, raw);
    out.node_labels = std::move(labels);
    out.skipped_edges = skipped;
    return out;
}

// Finds the single `*.content` / `*.cites` pair inside a directory.
inline RawDataset load_citation_dir(const std::filesystem::path& dir) {
    std::optional<std::filesystem::path> content, cites;
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto ext = entry.path().extension();
        if (ext == ".content") content = entry.path();
        if (ext == ".cites") cites = entry.path();
    }
    if (!content || !cites) {
        throw std::runtime_error("no .content/.cites pair found in " + dir.string());
    }
    return load_citation(*content, *cites);
}

inline RawDataset load_generic(const std::filesystem::path& edge_tsv,
                               const std::filesystem::path& feature_tsv) {
    const std::string feat_name = feature_tsv.string();
    std::ifstream fin = detail::open_input(feature_tsv);
    std::vector<std::pair<std::uint64_t, std::vector<double>>> rows;
    std::string line;
    std::size_t lineno = 0;
    std::size_t dim = 0;
    while (std::getline(fin, line)) {
        ++lineno;
        auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        auto id = detail::parse_uint(toks[0]);
        if (!id) throw ParseError(feat_name, lineno, "bad node id '" + std::string(toks[0]) + "'");
        const std::size_t d = toks.size() - 1;
        if (rows.empty()) dim = d;
        if (d != dim) {
            throw ParseError(feat_name, lineno,
                             "feature dimension " + std::to_string(d) + " != " + std::to_string(dim));
        }
        std::vector<double> vals;
        vals.reserve(d);
        for (std::size_t k = 1; k < toks.size(); ++k) {
            auto v = detail::parse_double(toks[k]);
            if (!v) throw ParseError(feat_name, lineno, "bad feature value '" + std::string(toks[k]) + "'");
            vals.push_back(*v);
        }
        rows.emplace_back(*id, std::move(vals));
    }
    const std::size_t n = rows.size();
    if (n == 0) throw ParseError(feat_name, lineno, "no feature rows");

    FeatureMatrix features(n, dim);
    std::vector<bool> seen(n, false);
    for (const auto& [id, vals] : rows) {
        if (id >= n) {
            throw std::runtime_error(feat_name + ": node id " + std::to_string(id) +
                                     " outside dense range [0, " + std::to_string(n) + ")");
        }
        if (seen[id]) throw std::runtime_error(feat_name + ": duplicate node id " + std::to_string(id));
        seen[id] = true;
        std::copy(vals.begin(), vals.end(), features.row(id).begin());
    }

    const std::string edge_name = edge_tsv.string();
    std::ifstream ein = detail::open_input(edge_tsv);
    std::vector<Edge> raw;
    lineno = 0;
    while (std::getline(ein, line)) {
        ++lineno;
        auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        if (toks.size() != 2) throw ParseError(edge_name, lineno, "expected two node ids");
        auto a = detail::parse_uint(toks[0]);
        auto b = detail::parse_uint(toks[1]);
        if (!a || !b) throw ParseError(edge_name, lineno, "bad node id");
        if (*a >= n || *b >= n) {
            throw ParseError(edge_name, lineno,
                             "node " + std::to_string(std::max(*a, *b)) + " has no feature row");
        }
        raw.push_back({static_cast<NodeId>(*a), static_cast<NodeId>(*b)});
    }

    RawDataset out;
    out.features = std::move(features);
    out.edges = EdgeList::canonicalize(n, raw);
    return out;
}

inline void write_generic(const RawDataset& data, const std::filesystem::path& edge_tsv,
                          const std::filesystem::path& feature_tsv) {
    std::ofstream eout(edge_tsv, std::ios::binary);
    if (!eout) throw std::runtime_error("cannot write " + edge_tsv.string());
    for (const Edge& e : data.edges) eout << e.src << '\t' << e.dst << '\n';

    std::ofstream fout(feature_tsv, std::ios::binary);
    if (!fout) throw std::runtime_error("cannot write " + feature_tsv.string());
    for (std::size_t i = 0; i < data.features.rows(); ++i) {
        fout << i;
        for (double v : data.features.row(i)) fout << '\t' << detail::format_double(v);
        fout << '\n';
    }
}

// Stochastic block model with `num_blocks` equal blocks. Features are the
// one-hot block indicator in the leading columns plus N(0, 0.01^2) noise on
// every entry.
inline RawDataset generate_sbm(std::size_t num_blocks, std::size_t block_size, double p_in,
                               double p_out, std::size_t feat_dim, Rng& rng) {
    if (num_blocks == 0 || block_size == 0) throw std::invalid_argument("generate_sbm: empty model");
    if (!(0.0 <= p_out && p_out <= p_in && p_in <= 1.0)) {
        throw std::invalid_argument("generate_sbm: need 0 <= p_out <= p_in <= 1");
    }
    if (feat_dim < num_blocks) throw std::invalid_argument("generate_sbm: feat_dim < num_blocks");

    const std::size_t n = num_blocks * block_size;
    std::vector<Edge> edges;
    for (NodeId i = 0; i < n; ++i) {
        for (NodeId j = i + 1; j < n; ++j) {
            const bool same = i / block_size == j / block_size;
            if (rng.bernoulli(same ? p_in : p_out)) edges.push_back({i, j});
        }
    }

    RawDataset out;
    out.features = FeatureMatrix(n, feat_dim);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(i / block_size);
        for (std::size_t c = 0; c < feat_dim; ++c) out.features(i, c) = 0.01 * rng.normal();
        out.features(i, static_cast<std::size_t>(labels[i])) += 1.0;
    }
    out.edges = EdgeList(n, std::move(edges));
    out.node_labels = std::move(labels);
    return out;
}

// ceil(frac * m), tolerant of representation error such as 0.1 * 30.
inline std::size_t fraction_count(double frac, std::size_t m) {
    return static_cast<std::size_t>(std::ceil(frac * static_cast<double>(m) - 1e-9));
}

// Samples `count` distinct non-edges, none a self-loop and none already in
// `taken`. Every accepted pair is added to `taken`.
inline std::vector<Edge> sample_distinct_non_edges(std::size_t count, std::size_t num_nodes,
                                                   const EdgeSet& edges, EdgeSet& taken, Rng& rng,
                                                   std::size_t& budget) {
    std::vector<Edge> out;
    out.reserve(count);
    while (out.size() < count) {
        if (budget == 0) {
            throw std::runtime_error("split_edges: graph too dense to sample enough negative pairs");
        }
        --budget;
        const auto a = static_cast<NodeId>(rng.below(num_nodes));
        const auto b = static_cast<NodeId>(rng.below(num_nodes));
        if (a == b) continue;
        const Edge e = make_canonical(a, b);
        if (edges.contains(e) || taken.contains(e)) continue;
        taken.insert(e);
        out.push_back(e);
    }
    return out;
}

inline DatasetSplit split_edges(const RawDataset& data, double val_frac, double test_frac, Rng& rng) {
    if (val_frac < 0.0 || test_frac < 0.0 || val_frac + test_frac >= 1.0) {
        throw std::invalid_argument("split_edges: need val_frac, test_frac >= 0 and val_frac + test_frac < 1");
    }
    const EdgeList& all = data.edges;
    const std::size_t n = all.num_nodes();
    const std::size_t m = all.size();
    const std::size_t n_test = fraction_count(test_frac, m);
    const std::size_t n_val = fraction_count(val_frac, m);
    if (n_test + n_val > m) throw std::invalid_argument("split_edges: fractions exceed edge count");

    std::vector<std::size_t> order(m);
    for (std::size_t k = 0; k < m; ++k) order[k] = k;
    for (std::size_t k = m; k > 1; --k) {
        std::swap(order[k - 1], order[rng.below(k)]);
    }

    std::vector<Edge> test_pos, val_pos, train;
    for (std::size_t k = 0; k < m; ++k) {
        const Edge& e = all[order[k]];
        if (k < n_test) {
            test_pos.push_back(e);
        } else if (k < n_test + n_val) {
            val_pos.push_back(e);
        } else {
            train.push_back(e);
        }
    }

    const EdgeSet full(all);
    EdgeSet taken;
    std::size_t budget = 100 * (n_test + n_val);
    auto test_neg = sample_distinct_non_edges(n_test, n, full, taken, rng, budget);
    auto val_neg = sample_distinct_non_edges(n_val, n, full, taken, rng, budget);

    DatasetSplit split;
    split.num_nodes = n;
    split.train_edges = EdgeList(n, std::move(train));
    split.val_pos = EdgeList(n, std::move(val_pos));
    split.val_neg = EdgeList(n, std::move(val_neg));
    split.test_pos = EdgeList(n, std::move(test_pos));
    split.test_neg = EdgeList(n, std::move(test_neg));
    return split;
}

// Throws std::logic_error naming the first violated split invariant.
inline void validate_split(const DatasetSplit& split, const EdgeList& original) {
    auto fail = [](const std::string& what) { throw std::logic_error("invalid split: " + what); };
    const std::size_t n = split.num_nodes;
    for (const EdgeList* part : {&split.train_edges, &split.val_pos, &split.val_neg, &split.test_pos,
                                 &split.test_neg}) {
        if (part->num_nodes() != n) fail("node count mismatch");
    }
    if (original.num_nodes() != n) fail("node count differs from original graph");

    std::vector<Edge> merged;
    for (const EdgeList* part : {&split.train_edges, &split.val_pos, &split.test_pos}) {
        merged.insert(merged.end(), part->begin(), part->end());
    }
    std::sort(merged.begin(), merged.end());
    if (std::adjacent_find(merged.begin(), merged.end()) != merged.end()) {
        fail("positive sets overlap");
    }
    if (merged != original.edges()) fail("positive sets do not cover the original edge set");
    if (split.val_neg.size() != split.val_pos.size()) fail("|val_neg| != |val_pos|");
    if (split.test_neg.size() != split.test_pos.size()) fail("|test_neg| != |test_pos|");
    for (const EdgeList* part : {&split.val_neg, &split.test_neg}) {
        for (const Edge& e : *part) {
            if (original.contains(e)) fail("negative pair is an edge");
        }
    }
    for (const Edge& e : split.val_neg) {
        if (split.test_neg.contains(e)) fail("val_neg and test_neg overlap");
    }
}

// Split manifest JSON ------------------------------------------------------

inline nlohmann::json edges_to_json(const EdgeList& edges) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Edge& e : edges) arr.push_back({e.src, e.dst});
    return arr;
}

inline EdgeList edges_from_json(const nlohmann::json& arr, std::size_t num_nodes) {
    std::vector<Edge> out;
    out.reserve(arr.size());
    for (const auto& pair : arr) {
        if (!pair.is_array() || pair.size() != 2) {
            throw std::runtime_error("manifest: edge entries must be [src, dst] pairs");
        }
        out.push_back(make_canonical(pair[0].get<NodeId>(), pair[1].get<NodeId>()));
    }
    return EdgeList(num_nodes, std::move(out));
}

inline nlohmann::json split_to_json(const DatasetSplit& split) {
    return {
        {"num_nodes", split.num_nodes},
        {"seed", split.seed},
        {"train", edges_to_json(split.train_edges)},
        {"val_pos", edges_to_json(split.val_pos)},
        {"val_neg", edges_to_json(split.val_neg)},
        {"test_pos", edges_to_json(split.test_pos)},
        {"test_neg", edges_to_json(split.test_neg)},
    };
}

inline DatasetSplit split_from_json(const nlohmann::json& j) {
    for (const char* key : {"num_nodes", "train", "val_pos", "val_neg", "test_pos", "test_neg"}) {
        if (!j.contains(key)) throw std::runtime_error(std::string("manifest: missing key '") + key + "'");
    }
    DatasetSplit split;
    split.num_nodes = j.at("num_nodes").get<std::size_t>();
    split.seed = j.value("seed", std::uint64_t{0});
    split.train_edges = edges_from_json(j.at("train"), split.num_nodes);
    split.val_pos = edges_from_json(j.at("val_pos"), split.num_nodes);
    split.val_neg = edges_from_json(j.at("val_neg"), split.num_nodes);
    split.test_pos = edges_from_json(j.at("test_pos"), split.num_nodes);
    split.test_neg = edges_from_json(j.at("test_neg"), split.num_nodes);
    return split;
}

inline void write_split_manifest(const DatasetSplit& split, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << split_to_json(split).dump() << '\n';
}

inline DatasetSplit read_split_manifest(const std::filesystem::path& path) {
    std::ifstream in = detail::open_input(path);
    return split_from_json(nlohmann::json::parse(in));
}

}  // namespace cgcl
