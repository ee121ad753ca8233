#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tan/matrix.hpp"

namespace tanet {

using NodeId = std::int32_t;
using EdgeId = std::int32_t;

struct EdgePair {
    NodeId i = 0;
    NodeId j = 0;
    friend bool operator==(const EdgePair&, const EdgePair&) = default;
};

// Undirected simple graph with a CSR adjacency index.
//
// Edge e joins lo(e) < hi(e). Directed messages are addressed by
// 2*e (lo -> hi) and 2*e + 1 (hi -> lo); the reverse of directed id d is d ^ 1.
// Each node's adjacency slots are sorted by neighbor id, and every slot
// carries the incident edge plus its incoming and outgoing directed ids.
class GraphTopology {
public:
    GraphTopology() = default;

    std::size_t node_count() const noexcept { return node_count_; }
    std::size_t edge_count() const noexcept { return lo_.size(); }
    std::size_t directed_count() const noexcept { return 2 * lo_.size(); }

    NodeId lo(EdgeId e) const { return lo_[static_cast<std::size_t>(e)]; }
    NodeId hi(EdgeId e) const { return hi_[static_cast<std::size_t>(e)]; }
    std::span<const NodeId> lo_nodes() const noexcept { return lo_; }
    std::span<const NodeId> hi_nodes() const noexcept { return hi_; }

    std::size_t degree(NodeId i) const {
        return offsets_[static_cast<std::size_t>(i) + 1] - offsets_[static_cast<std::size_t>(i)];
    }
    std::span<const NodeId> neighbors(NodeId i) const { return slot_span(neighbor_, i); }
    std::span<const EdgeId> incident_edges(NodeId i) const { return slot_span(edge_, i); }
    // Directed ids k -> i for each slot of i.
    std::span<const std::int32_t> incoming(NodeId i) const { return slot_span(incoming_, i); }
    // Directed ids i -> k for each slot of i.
    std::span<const std::int32_t> outgoing(NodeId i) const { return slot_span(outgoing_, i); }
    std::span<const std::size_t> offsets() const noexcept { return offsets_; }

    NodeId source(std::int32_t directed) const {
        const auto e = static_cast<std::size_t>(directed >> 1);
        return (directed & 1) ? hi_[e] : lo_[e];
    }
    NodeId target(std::int32_t directed) const {
        const auto e = static_cast<std::size_t>(directed >> 1);
        return (directed & 1) ? lo_[e] : hi_[e];
    }

    std::vector<EdgePair> edge_list() const;

    friend bool operator==(const GraphTopology&, const GraphTopology&) = default;

private:
    friend GraphTopology build_topology(std::size_t, std::span<const EdgePair>);

    template <class T>
    std::span<const T> slot_span(const std::vector<T>& v, NodeId i) const {
        const auto b = offsets_[static_cast<std::size_t>(i)];
        return {v.data() + b, offsets_[static_cast<std::size_t>(i) + 1] - b};
    }

    std::size_t node_count_ = 0;
    std::vector<NodeId> lo_, hi_;
    std::vector<std::size_t> offsets_{0};
    std::vector<NodeId> neighbor_;
    std::vector<EdgeId> edge_;
    std::vector<std::int32_t> incoming_, outgoing_;
};

// Drops self loops, collapses duplicates, canonicalizes to i < j.
// Throws InputError naming the first pair with an out-of-range endpoint.
GraphTopology build_topology(std::size_t node_count, std::span<const EdgePair> edges);

using TopologyPtr = std::shared_ptr<const GraphTopology>;

inline TopologyPtr make_topology(std::size_t node_count, std::span<const EdgePair> edges) {
    return std::make_shared<const GraphTopology>(build_topology(node_count, edges));
}

// Precision matrix on a fixed topology: one diagonal value per node and one
// off-diagonal value per undirected edge (J_ij = J_ji by construction).
struct SparseSymmetricMatrix {
    TopologyPtr topology;
    std::vector<double> diagonal;
    std::vector<double> off_diagonal;

    SparseSymmetricMatrix() = default;
    SparseSymmetricMatrix(TopologyPtr topo, std::vector<double> diag, std::vector<double> off);

    std::size_t size() const noexcept { return diagonal.size(); }
    const GraphTopology& graph() const { return *topology; }

    // y = J x for a node x column matrix.
    Matrix multiply(const Matrix& x) const;
    Matrix to_dense() const;

    bool all_finite() const noexcept;
    bool positive_diagonal() const noexcept;
};

// Matrix exchange format: `n m`, m lines `i j value` (i < j), n lines `i value`.
// `#` starts a comment. Throws ParseError with the offending line.
SparseSymmetricMatrix read_matrix_text(std::istream& in);
SparseSymmetricMatrix read_matrix_file(const std::string& path);
void write_matrix_text(std::ostream& out, const SparseSymmetricMatrix& J);

// Whitespace-separated dense rows, one row per line; all rows share a width.
Matrix read_dense_text(std::istream& in);
Matrix read_dense_file(const std::string& path);
void write_dense_text(std::ostream& out, const Matrix& m);

}  // namespace tanet
