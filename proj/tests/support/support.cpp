#include "support.hpp"

#include <atomic>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace tanet::testing {

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(r, c);
    return out;
}

Eigen::MatrixXd dense(const SparseSymmetricMatrix& J) { return to_eigen(J.to_dense()); }

Matrix from_eigen(const Eigen::MatrixXd& m) {
    Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

SparseSymmetricMatrix from_dense(const Eigen::MatrixXd& J) {
    const auto n = static_cast<std::size_t>(J.rows());
    std::vector<EdgePair> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0.0)
                edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
    auto topo = make_topology(n, edges);
    std::vector<double> diag(n), off(topo->edge_count());
    for (std::size_t i = 0; i < n; ++i) diag[i] = J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    for (std::size_t e = 0; e < off.size(); ++e) {
        auto id = static_cast<EdgeId>(e);
        off[e] = J(topo->lo(id), topo->hi(id));
    }
    return SparseSymmetricMatrix(topo, diag, off);
}

Dataset synthetic_dataset(std::size_t n, std::size_t d, std::size_t k, double bias, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.name = "synthetic";
    ds.num_classes = k;
    ds.split_ratios = {0.48, 0.32, 0.20};
    for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(static_cast<int>(rng.below(k)));
    std::vector<EdgePair> e;
    while (e.size() < 2 * n) {
        auto i = rng.below(n), j = rng.below(n);
        if (i == j) continue;
        if (ds.labels[i] == ds.labels[j] || rng.uniform() > bias) e.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
    }
    ds.topology = make_topology(n, e);
    ds.features = Matrix(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) {
            const bool own = c % k == static_cast<std::size_t>(ds.labels[i]);
            ds.features(i, c) = rng.uniform() < (own ? 0.3 : 0.05) ? 1.0 : 0.0;
        }
    l1_normalize_rows(ds.features);
    return ds;
}

Dataset toy_dataset() {
    Dataset ds;
    ds.name = "toy";
    ds.num_classes = 2;
    ds.split_ratios = {0.6, 0.2, 0.2};
    std::vector<EdgePair> e;
    for (int i = 0; i < 9; ++i) e.push_back({i, i + 1});
    ds.topology = make_topology(10, e);
    ds.features = Matrix(10, 4);
    for (std::size_t i = 0; i < 10; ++i) {
        ds.labels.push_back(i < 5 ? 0 : 1);
        ds.features(i, i < 5 ? 0 : 1) = 1.0;
        ds.features(i, 2 + i % 2) = 0.5;
    }
    l1_normalize_rows(ds.features);
    return ds;
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tan_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

void write_text(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace tanet::testing

namespace tanet::testing {

namespace {

// mu for one column with dual-valued inputs. Directed messages keyed by
// (from, to) in dense arrays; the graph is small.
std::vector<Dual> unrolled_column(const GraphTopology& g, const std::vector<Dual>& diag, const std::vector<Dual>& off,
                                  const std::vector<Dual>& h, int iterations) {
    const std::size_t n = g.node_count();
    std::vector<Dual> P(n * n), E(n * n), P2(n * n), E2(n * n);
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> nb(n);  // (neighbor, edge)
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        auto a = static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)));
        auto b = static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)));
        nb[a].push_back({b, e});
        nb[b].push_back({a, e});
    }
    for (int it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i)
            for (auto [j, e] : nb[i]) {
                Dual alpha = diag[i], beta = h[i];
                for (auto [k, ek] : nb[i]) {
                    (void)ek;
                    if (k == j) continue;
                    alpha = alpha + P[k * n + i];
                    beta = beta + E[k * n + i];
                }
                P2[i * n + j] = -(off[e] * off[e]) / alpha;
                E2[i * n + j] = -(off[e] * beta) / alpha;
            }
        std::swap(P, P2);
        std::swap(E, E2);
    }
    std::vector<Dual> mu(n);
    for (std::size_t i = 0; i < n; ++i) {
        Dual pi = diag[i], eta = h[i];
        for (auto [k, e] : nb[i]) {
            (void)e;
            pi = pi + P[k * n + i];
            eta = eta + E[k * n + i];
        }
        mu[i] = eta / pi;
    }
    return mu;
}

}  // namespace

UnrolledGradient unrolled_gabp_gradient(const SparseSymmetricMatrix& J, const Matrix& h, const Matrix& W,
                                        int iterations) {
    const auto& g = J.graph();
    const std::size_t n = g.node_count(), E = g.edge_count(), d = h.cols();
    auto lift = [](const std::vector<double>& v) {
        std::vector<Dual> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = {v[i], 0.0};
        return out;
    };
    auto column = [&](std::size_t c) {
        std::vector<Dual> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = {h(i, c), 0.0};
        return out;
    };
    // Loss tangent for one seeded direction.
    auto tangent = [&](const std::vector<Dual>& dg, const std::vector<Dual>& of, std::size_t seeded_col,
                       const std::vector<Dual>* hcol) {
        double total = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            if (hcol && c != seeded_col) continue;  // h tangent only moves its own column
            auto mu = unrolled_column(g, dg, of, (hcol && c == seeded_col) ? *hcol : column(c), iterations);
            for (std::size_t i = 0; i < n; ++i) total += W(i, c) * mu[i].d;
        }
        return total;
    };
    UnrolledGradient out{std::vector<double>(n), std::vector<double>(E), Matrix(n, d)};
    const auto dg0 = lift(J.diagonal), of0 = lift(J.off_diagonal);
    for (std::size_t i = 0; i < n; ++i) {
        auto dg = dg0;
        dg[i].d = 1.0;
        out.diag[i] = tangent(dg, of0, 0, nullptr);
    }
    for (std::size_t e = 0; e < E; ++e) {
        auto of = of0;
        of[e].d = 1.0;
        out.off[e] = tangent(dg0, of, 0, nullptr);
    }
    for (std::size_t c = 0; c < d; ++c)
        for (std::size_t i = 0; i < n; ++i) {
            auto hc = column(c);
            hc[i].d = 1.0;
            out.h(i, c) = tangent(dg0, of0, c, &hc);
        }
    return out;
}

}  // namespace tanet::testing
