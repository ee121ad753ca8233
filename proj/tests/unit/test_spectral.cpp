#include <doctest.h>

#include "support.hpp"
#include "tan/errors.hpp"
#include "tan/spectral.hpp"

using namespace tanet;
using namespace tanet::testing;

namespace {

SparseSymmetricMatrix two_by_two(double d, double o) {
    auto topo = make_topology(2, std::vector<EdgePair>{{0, 1}});
    return SparseSymmetricMatrix(topo, {d, d}, {o});
}

SparseSymmetricMatrix unit_weights(TopologyPtr topo) {
    return SparseSymmetricMatrix(topo, std::vector<double>(topo->node_count(), 1.0),
                                 std::vector<double>(topo->edge_count(), -0.1));
}

// Dense Fiedler vector of the normalized Laplacian with |J_ij| weights.
Eigen::VectorXd dense_fiedler(const SparseSymmetricMatrix& J) {
    Eigen::MatrixXd W = dense(J).cwiseAbs();
    W.diagonal().setZero();
    Eigen::VectorXd deg = W.rowwise().sum();
    const auto n = W.rows();
    Eigen::MatrixXd L = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (W(i, j) != 0.0) L(i, j) = -W(i, j) / std::sqrt(deg(i) * deg(j));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
    return es.eigenvectors().col(1);
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("identity has zero radius") {
    auto topo = make_topology(4, {});
    auto r = spectral_radius_abs_residual(SparseSymmetricMatrix(topo, {1, 1, 1, 1}, {}));
    CHECK(r.spectral_radius == 0.0);
    CHECK(r.walk_summable());
    CHECK(r.normalized);
}

TEST_CASE("2x2 example") {
    auto r = spectral_radius_abs_residual(two_by_two(2.0, 1.0));
    CHECK(r.converged);
    CHECK(r.spectral_radius == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("non-positive diagonal is a domain error") {
    CHECK_THROWS_AS(spectral_radius_abs_residual(two_by_two(0.0, 1.0)), DomainError);
    CHECK_THROWS_AS(spectral_radius_abs_residual(two_by_two(-1.0, 0.1)), DomainError);
}

TEST_CASE("random diagonally dominant matrices are walk-summable") {
    Rng rng(21);
    for (int rep = 0; rep < 10; ++rep) {
        auto topo = random_graph(50, 0.1, rng);
        std::vector<double> off(topo->edge_count());
        for (auto& v : off) v = rng.uniform(-1.0, 1.0);
        std::vector<double> diag(50, 0.05);
        for (std::size_t e = 0; e < off.size(); ++e) {
            diag[static_cast<std::size_t>(topo->lo(static_cast<EdgeId>(e)))] += std::abs(off[e]);
            diag[static_cast<std::size_t>(topo->hi(static_cast<EdgeId>(e)))] += std::abs(off[e]);
        }
        SparseSymmetricMatrix J(topo, diag, off);
        auto r = spectral_radius_abs_residual(J);
        CHECK(r.spectral_radius < 1.0);
        CHECK(r.spectral_radius == doctest::Approx(dense_abs_residual_radius(J)).epsilon(1e-6));
    }
}

TEST_CASE("agrees with dense eigensolver, including bipartite supports") {
    Rng rng(99);
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t n = 2 + rng.below(199);
        TopologyPtr topo = rep % 3 == 0 ? random_tree(n, rng) : random_graph(n, rng.uniform(0.01, 0.1), rng);
        std::vector<double> diag(n), off(topo->edge_count());
        for (auto& v : diag) v = rng.uniform(0.5, 3.0);
        for (auto& v : off) v = rng.uniform(-1.0, 1.0);
        SparseSymmetricMatrix J(topo, diag, off);
        auto r = spectral_radius_abs_residual(J);
        const double want = dense_abs_residual_radius(J);
        CHECK(r.converged);
        CHECK(std::abs(r.spectral_radius - want) <= 1e-6 * std::max(want, 1e-12));
    }
}

TEST_CASE("radius is invariant under node relabeling") {
    Rng rng(4);
    auto J = random_walk_summable(random_graph(40, 0.15, rng), 0.8, rng);
    std::vector<NodeId> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 39; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    std::vector<EdgePair> edges;
    for (auto e : J.topology->edge_list()) edges.push_back({perm[static_cast<std::size_t>(e.i)], perm[static_cast<std::size_t>(e.j)]});
    auto topo = make_topology(40, edges);
    std::vector<double> diag(40), off(topo->edge_count());
    for (std::size_t i = 0; i < 40; ++i) diag[static_cast<std::size_t>(perm[i])] = J.diagonal[i];
    auto old_edges = J.topology->edge_list();
    for (std::size_t e = 0; e < old_edges.size(); ++e) {
        NodeId a = perm[static_cast<std::size_t>(old_edges[e].i)], b = perm[static_cast<std::size_t>(old_edges[e].j)];
        auto nb = topo->neighbors(std::min(a, b));
        auto s = std::lower_bound(nb.begin(), nb.end(), std::max(a, b)) - nb.begin();
        off[static_cast<std::size_t>(topo->incident_edges(std::min(a, b))[static_cast<std::size_t>(s)])] = J.off_diagonal[e];
    }
    SparseSymmetricMatrix P(topo, diag, off);
    CHECK(std::abs(spectral_radius_abs_residual(J, 1e-13, 100000).spectral_radius -
                   spectral_radius_abs_residual(P, 1e-13, 100000).spectral_radius) < 1e-9);
}

TEST_CASE("non-converged power iteration reports its best estimate") {
    Rng rng(8);
    auto J = random_walk_summable(random_graph(60, 0.1, rng), 0.9, rng);
    auto r = spectral_radius_abs_residual(J, 1e-15, 2);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations_used == 2);
    CHECK(r.spectral_radius > 0.0);
}

TEST_CASE("fiedler order of a path keeps the middle node in the middle") {
    auto topo = make_topology(3, std::vector<EdgePair>{{0, 1}, {1, 2}});
    auto ord = fiedler_order(unit_weights(topo));
    CHECK(ord.warning.empty());
    CHECK(ord.order[1] == 1);
    CHECK((ord.order == std::vector<NodeId>{0, 1, 2} || ord.order == std::vector<NodeId>{2, 1, 0}));
}

TEST_CASE("fiedler order of an edgeless graph is the identity with a warning") {
    auto ord = fiedler_order(SparseSymmetricMatrix(make_topology(3, {}), {1, 1, 1}, {}));
    CHECK(ord.order == std::vector<NodeId>{0, 1, 2});
    CHECK_FALSE(ord.warning.empty());
    auto one = fiedler_order(SparseSymmetricMatrix(make_topology(1, {}), {1}, {}));
    CHECK(one.order == std::vector<NodeId>{0});
    CHECK_FALSE(one.warning.empty());
}

TEST_CASE("two disjoint triangles stay contiguous") {
    auto topo = make_topology(6, std::vector<EdgePair>{{0, 2}, {2, 4}, {0, 4}, {1, 3}, {3, 5}, {1, 5}});
    auto ord = fiedler_order(unit_weights(topo));
    auto group = [](NodeId v) { return v % 2; };
    CHECK(group(ord.order[0]) == group(ord.order[1]));
    CHECK(group(ord.order[1]) == group(ord.order[2]));
    CHECK(group(ord.order[3]) == group(ord.order[4]));
    CHECK(group(ord.order[4]) == group(ord.order[5]));
    CHECK(group(ord.order[2]) != group(ord.order[3]));
}

TEST_CASE("fiedler order matches the dense eigenvector ordering") {
    Rng rng(12);
    for (int rep = 0; rep < 10; ++rep) {
        // Two loosely joined communities give a well separated second eigenvalue.
        const std::size_t n = 20;
        std::vector<EdgePair> edges;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const bool same = (i < n / 2) == (j < n / 2);
                if (rng.uniform() < (same ? 0.5 : 0.03)) edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
            }
        edges.push_back({0, static_cast<NodeId>(n - 1)});
        auto topo = make_topology(n, edges);
        std::vector<double> off(topo->edge_count());
        for (auto& v : off) v = rng.uniform(0.2, 1.0);
        SparseSymmetricMatrix J(topo, std::vector<double>(n, 10.0), off);
        Eigen::VectorXd v = dense_fiedler(J);
        auto ord = fiedler_order(J);
        // Same ordering up to reversal: values along our order are monotone.
        std::vector<double> along;
        for (auto i : ord.order) along.push_back(v(i));
        const bool inc = std::is_sorted(along.begin(), along.end(), [](double a, double b) { return a < b - 1e-7; });
        const bool dec = std::is_sorted(along.begin(), along.end(), [](double a, double b) { return a > b + 1e-7; });
        CHECK((inc || dec));
    }
}

}
