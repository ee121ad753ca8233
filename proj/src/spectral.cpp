#include "tan/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tan/errors.hpp"

namespace tanet {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void normalize(std::vector<double>& v) {
    const double n = std::sqrt(dot(v, v));
    if (n > 0.0) {
        for (auto& x : v) x /= n;
    }
}

// y = W x for the symmetric edge-weighted operator with zero diagonal.
void apply_edges(const GraphTopology& g, const std::vector<double>& w, const std::vector<double>& x,
                 std::vector<double>& y) {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        const auto a = static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)));
        const auto b = static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)));
        y[a] += w[e] * x[b];
        y[b] += w[e] * x[a];
    }
}

}  // namespace

WalkSummabilityReport spectral_radius_abs_residual(const SparseSymmetricMatrix& J, double tol, int max_iter) {
    const auto& g = J.graph();
    const std::size_t n = g.node_count();
    for (std::size_t i = 0; i < n; ++i) {
        if (!(J.diagonal[i] > 0.0)) {
            throw DomainError("spectral_radius_abs_residual: J_" + std::to_string(i) + std::to_string(i) + " = " +
                              std::to_string(J.diagonal[i]) + " is not positive");
        }
    }
    WalkSummabilityReport rep;
    if (g.edge_count() == 0 || n == 0) {
        rep.converged = true;
        return rep;
    }
    std::vector<double> w(g.edge_count());
    for (std::size_t e = 0; e < w.size(); ++e) {
        const auto a = static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)));
        const auto b = static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)));
        w[e] = std::abs(J.off_diagonal[e]) / std::sqrt(J.diagonal[a] * J.diagonal[b]);
    }

    std::vector<double> x(n, 1.0), rx(n);
    normalize(x);
    double prev = -1.0;
    for (int it = 1; it <= max_iter; ++it) {
        apply_edges(g, w, x, rx);
        const double q = dot(x, rx);  // Rayleigh quotient, x has unit norm
        rep.spectral_radius = std::max(q, 0.0);
        rep.iterations_used = it;
        if (std::abs(q - prev) <= tol) {
            rep.converged = true;
            break;
        }
        prev = q;
        for (std::size_t i = 0; i < n; ++i) x[i] += rx[i];
        normalize(x);
    }
    return rep;
}

NodeOrdering fiedler_order(const SparseSymmetricMatrix& J, double tol, int max_iter) {
    const auto& g = J.graph();
    const std::size_t n = g.node_count();
    NodeOrdering out;
    out.order.resize(n);
    std::iota(out.order.begin(), out.order.end(), 0);
    if (n < 2) {
        out.warning = "fiedler_order: fewer than two nodes, identity ordering";
        return out;
    }
    std::vector<double> deg(n, 0.0);
    std::vector<double> w(g.edge_count());
    for (std::size_t e = 0; e < w.size(); ++e) {
        w[e] = std::abs(J.off_diagonal[e]);
        deg[static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)))] += w[e];
        deg[static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)))] += w[e];
    }
    if (std::all_of(deg.begin(), deg.end(), [](double d) { return d == 0.0; })) {
        out.warning = "fiedler_order: no off-diagonal support, identity ordering";
        return out;
    }
    // M = D^{-1/2} W D^{-1/2}; L = I - M. Zero-degree nodes get a zero row in
    // M (an identity row in L). The smallest eigenvector of L is D^{1/2} 1,
    // so the Fiedler vector is the dominant eigenvector of (I + M)/2 in the
    // complement of D^{1/2} 1.
    std::vector<double> mw(w.size());
    for (std::size_t e = 0; e < w.size(); ++e) {
        const auto a = static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)));
        const auto b = static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)));
        mw[e] = (w[e] > 0.0) ? w[e] / std::sqrt(deg[a] * deg[b]) : 0.0;
    }
    std::vector<double> top(n);
    for (std::size_t i = 0; i < n; ++i) top[i] = std::sqrt(deg[i]);
    normalize(top);

    auto deflate = [&](std::vector<double>& v) {
        const double p = dot(v, top);
        for (std::size_t i = 0; i < n; ++i) v[i] -= p * top[i];
    };

    // Deterministic, non-symmetric start so the iterate is not orthogonal to
    // the Fiedler direction by accident.
    std::vector<double> x(n), mx(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::cos(1.0 + 0.7 * static_cast<double>(i)) + 0.01 * static_cast<double>(i);
    deflate(x);
    normalize(x);
    for (int it = 0; it < max_iter; ++it) {
        apply_edges(g, mw, x, mx);
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) mx[i] = 0.5 * (x[i] + mx[i]);
        deflate(mx);
        normalize(mx);
        for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(mx[i] - x[i]));
        x.swap(mx);
        if (change <= tol) break;
    }
    // Orientation: the first entry of noticeable size is made negative.
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(x[i]) > 1e-8) {
            if (x[i] > 0.0) {
                for (auto& v : x) v = -v;
            }
            break;
        }
    }
    std::stable_sort(out.order.begin(), out.order.end(), [&](NodeId a, NodeId b) {
        return x[static_cast<std::size_t>(a)] < x[static_cast<std::size_t>(b)];
    });
    return out;
}

}  // namespace tanet
