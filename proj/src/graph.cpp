#include "tan/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "tan/errors.hpp"

namespace tanet {

GraphTopology build_topology(std::size_t node_count, std::span<const EdgePair> edges) {
    if (node_count > static_cast<std::size_t>(std::numeric_limits<NodeId>::max())) {
        throw InputError("build_topology: node_count too large");
    }
    std::vector<EdgePair> canon;
    canon.reserve(edges.size());
    for (std::size_t k = 0; k < edges.size(); ++k) {
        const auto [a, b] = edges[k];
        if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= node_count || static_cast<std::size_t>(b) >= node_count) {
            throw InputError("build_topology: edge #" + std::to_string(k) + " (" + std::to_string(a) + ", " +
                             std::to_string(b) + ") out of range for " + std::to_string(node_count) + " nodes");
        }
        if (a == b) continue;
        canon.push_back(a < b ? EdgePair{a, b} : EdgePair{b, a});
    }
    std::sort(canon.begin(), canon.end(), [](const EdgePair& x, const EdgePair& y) {
        return x.i != y.i ? x.i < y.i : x.j < y.j;
    });
    canon.erase(std::unique(canon.begin(), canon.end()), canon.end());

    GraphTopology g;
    g.node_count_ = node_count;
    g.lo_.reserve(canon.size());
    g.hi_.reserve(canon.size());
    for (const auto& e : canon) {
        g.lo_.push_back(e.i);
        g.hi_.push_back(e.j);
    }

    std::vector<std::size_t> deg(node_count, 0);
    for (const auto& e : canon) {
        ++deg[static_cast<std::size_t>(e.i)];
        ++deg[static_cast<std::size_t>(e.j)];
    }
    g.offsets_.assign(node_count + 1, 0);
    for (std::size_t i = 0; i < node_count; ++i) g.offsets_[i + 1] = g.offsets_[i] + deg[i];

    const std::size_t slots = g.offsets_.back();
    g.neighbor_.resize(slots);
    g.edge_.resize(slots);
    g.incoming_.resize(slots);
    g.outgoing_.resize(slots);
    std::vector<std::size_t> fill(g.offsets_.begin(), g.offsets_.end() - 1);
    // Edges are sorted by (lo, hi), so appending in edge order visits each
    // node's smaller neighbors first (as hi) in ascending lo order, then its
    // larger neighbors (as lo) in ascending hi order: slots come out sorted.
    for (std::size_t pass = 0; pass < 2; ++pass) {
        for (std::size_t e = 0; e < canon.size(); ++e) {
            const auto lo = canon[e].i, hi = canon[e].j;
            const auto eid = static_cast<std::int32_t>(e);
            if (pass == 0) {
                auto& s = fill[static_cast<std::size_t>(hi)];
                g.neighbor_[s] = lo;
                g.edge_[s] = eid;
                g.incoming_[s] = 2 * eid;      // lo -> hi
                g.outgoing_[s] = 2 * eid + 1;  // hi -> lo
                ++s;
            } else {
                auto& s = fill[static_cast<std::size_t>(lo)];
                g.neighbor_[s] = hi;
                g.edge_[s] = eid;
                g.incoming_[s] = 2 * eid + 1;
                g.outgoing_[s] = 2 * eid;
                ++s;
            }
        }
    }
    return g;
}

std::vector<EdgePair> GraphTopology::edge_list() const {
    std::vector<EdgePair> out(lo_.size());
    for (std::size_t e = 0; e < lo_.size(); ++e) out[e] = {lo_[e], hi_[e]};
    return out;
}

SparseSymmetricMatrix::SparseSymmetricMatrix(TopologyPtr topo, std::vector<double> diag, std::vector<double> off)
    : topology(std::move(topo)), diagonal(std::move(diag)), off_diagonal(std::move(off)) {
    if (!topology) throw InputError("SparseSymmetricMatrix: null topology");
    if (diagonal.size() != topology->node_count() || off_diagonal.size() != topology->edge_count()) {
        throw InputError("SparseSymmetricMatrix: value arrays do not match topology (" +
                         std::to_string(diagonal.size()) + " diag for " + std::to_string(topology->node_count()) +
                         " nodes, " + std::to_string(off_diagonal.size()) + " off for " +
                         std::to_string(topology->edge_count()) + " edges)");
    }
}

Matrix SparseSymmetricMatrix::multiply(const Matrix& x) const {
    const auto& g = *topology;
    if (x.rows() != g.node_count()) {
        throw InputError("SparseSymmetricMatrix::multiply: expected " + std::to_string(g.node_count()) + " rows, got " +
                         std::to_string(x.rows()));
    }
    const std::size_t d = x.cols();
    Matrix y(x.rows(), d);
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        auto yi = y.row(i);
        const auto xi = x.row(i);
        for (std::size_t c = 0; c < d; ++c) yi[c] = diagonal[i] * xi[c];
        const auto nb = g.neighbors(static_cast<NodeId>(i));
        const auto ed = g.incident_edges(static_cast<NodeId>(i));
        for (std::size_t s = 0; s < nb.size(); ++s) {
            const double w = off_diagonal[static_cast<std::size_t>(ed[s])];
            const auto xk = x.row(static_cast<std::size_t>(nb[s]));
            for (std::size_t c = 0; c < d; ++c) yi[c] += w * xk[c];
        }
    }
    return y;
}

Matrix SparseSymmetricMatrix::to_dense() const {
    const std::size_t n = size();
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = diagonal[i];
    for (std::size_t e = 0; e < off_diagonal.size(); ++e) {
        const auto a = static_cast<std::size_t>(topology->lo(static_cast<EdgeId>(e)));
        const auto b = static_cast<std::size_t>(topology->hi(static_cast<EdgeId>(e)));
        m(a, b) = m(b, a) = off_diagonal[e];
    }
    return m;
}

bool SparseSymmetricMatrix::all_finite() const noexcept {
    auto fin = [](double v) { return std::isfinite(v); };
    return std::all_of(diagonal.begin(), diagonal.end(), fin) &&
           std::all_of(off_diagonal.begin(), off_diagonal.end(), fin);
}

bool SparseSymmetricMatrix::positive_diagonal() const noexcept {
    return std::all_of(diagonal.begin(), diagonal.end(), [](double v) { return v > 0.0; });
}

namespace {

// Strips comments and reports whether anything but whitespace remains.
bool next_content_line(std::istream& in, std::string& line, std::size_t& lineno) {
    while (std::getline(in, line)) {
        ++lineno;
        if (auto p = line.find('#'); p != std::string::npos) line.erase(p);
        if (line.find_first_not_of(" \t\r\n") != std::string::npos) return true;
    }
    return false;
}

template <class T>
T parse_field(std::istringstream& ss, std::size_t lineno, const char* what) {
    T v{};
    if (!(ss >> v)) throw ParseError(std::string("expected ") + what, lineno);
    return v;
}

void expect_end(std::istringstream& ss, std::size_t lineno) {
    std::string extra;
    if (ss >> extra) throw ParseError("unexpected trailing token '" + extra + "'", lineno);
}

}  // namespace

SparseSymmetricMatrix read_matrix_text(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!next_content_line(in, line, lineno)) throw ParseError("empty matrix file", lineno);
    std::istringstream head(line);
    const auto n = parse_field<long long>(head, lineno, "node count n");
    const auto m = parse_field<long long>(head, lineno, "edge count m");
    expect_end(head, lineno);
    if (n <= 0 || m < 0) throw ParseError("n must be positive and m nonnegative", lineno);

    std::vector<EdgePair> pairs;
    std::vector<double> values;
    pairs.reserve(static_cast<std::size_t>(m));
    for (long long k = 0; k < m; ++k) {
        if (!next_content_line(in, line, lineno)) throw ParseError("missing off-diagonal entry", lineno);
        std::istringstream ss(line);
        const auto i = parse_field<long long>(ss, lineno, "row index i");
        const auto j = parse_field<long long>(ss, lineno, "column index j");
        const auto v = parse_field<double>(ss, lineno, "value");
        expect_end(ss, lineno);
        if (i < 0 || j < 0 || i >= n || j >= n) throw ParseError("index out of range", lineno);
        if (i >= j) throw ParseError("off-diagonal entries require i < j", lineno);
        if (!std::isfinite(v)) throw ParseError("non-finite value", lineno);
        pairs.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
        values.push_back(v);
    }
    auto topo = make_topology(static_cast<std::size_t>(n), pairs);
    if (topo->edge_count() != pairs.size()) throw ParseError("duplicate off-diagonal entries", lineno);

    std::vector<double> off(pairs.size());
    {
        // Map each parsed pair to its canonical edge id.
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const auto nb = topo->neighbors(pairs[k].i);
            const auto ed = topo->incident_edges(pairs[k].i);
            const auto it = std::lower_bound(nb.begin(), nb.end(), pairs[k].j);
            off[static_cast<std::size_t>(ed[static_cast<std::size_t>(it - nb.begin())])] = values[k];
        }
    }

    std::vector<double> diag(static_cast<std::size_t>(n), 0.0);
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (long long k = 0; k < n; ++k) {
        if (!next_content_line(in, line, lineno)) throw ParseError("missing diagonal entry", lineno);
        std::istringstream ss(line);
        const auto i = parse_field<long long>(ss, lineno, "diagonal index i");
        const auto v = parse_field<double>(ss, lineno, "diagonal value");
        expect_end(ss, lineno);
        if (i < 0 || i >= n) throw ParseError("diagonal index out of range", lineno);
        if (seen[static_cast<std::size_t>(i)]) throw ParseError("duplicate diagonal entry", lineno);
        if (!std::isfinite(v)) throw ParseError("non-finite value", lineno);
        seen[static_cast<std::size_t>(i)] = true;
        diag[static_cast<std::size_t>(i)] = v;
    }
    if (next_content_line(in, line, lineno)) throw ParseError("trailing content after diagonal block", lineno);
    return SparseSymmetricMatrix(std::move(topo), std::move(diag), std::move(off));
}

SparseSymmetricMatrix read_matrix_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open matrix file '" + path + "'");
    try {
        return read_matrix_text(f);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what(), 0);
    }
}

void write_matrix_text(std::ostream& out, const SparseSymmetricMatrix& J) {
    const auto& g = J.graph();
    out << g.node_count() << ' ' << g.edge_count() << '\n' << std::setprecision(17);
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        out << g.lo(static_cast<EdgeId>(e)) << ' ' << g.hi(static_cast<EdgeId>(e)) << ' ' << J.off_diagonal[e]
            << '\n';
    }
    for (std::size_t i = 0; i < g.node_count(); ++i) out << i << ' ' << J.diagonal[i] << '\n';
}

Matrix read_dense_text(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    std::vector<double> data;
    std::size_t cols = 0, rows = 0;
    while (next_content_line(in, line, lineno)) {
        std::istringstream ss(line);
        std::size_t width = 0;
        std::string tok;
        while (ss >> tok) {
            double v = 0.0;
            try {
                std::size_t used = 0;
                v = std::stod(tok, &used);
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw ParseError("not a number: '" + tok + "'", lineno);
            }
            if (!std::isfinite(v)) throw ParseError("non-finite value", lineno);
            data.push_back(v);
            ++width;
        }
        if (rows == 0) cols = width;
        if (width != cols) {
            throw ParseError("row has " + std::to_string(width) + " values, expected " + std::to_string(cols), lineno);
        }
        ++rows;
    }
    if (rows == 0) throw ParseError("no rows", lineno);
    return Matrix(rows, cols, std::move(data));
}

Matrix read_dense_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open file '" + path + "'");
    try {
        return read_dense_text(f);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what(), 0);
    }
}

void write_dense_text(std::ostream& out, const Matrix& m) {
    out << std::setprecision(17);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << m(r, c);
        out << '\n';
    }
}

}  // namespace tanet
