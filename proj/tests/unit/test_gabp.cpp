#include <doctest.h>

#include <queue>

#include "support.hpp"
#include "tan/builders.hpp"
#include "tan/errors.hpp"
#include "tan/gabp.hpp"

using namespace tanet;
using namespace tanet::testing;

namespace {

std::vector<int> bfs(const GraphTopology& g, NodeId s) {
    std::vector<int> d(g.node_count(), -1);
    std::queue<NodeId> q;
    d[static_cast<std::size_t>(s)] = 0;
    q.push(s);
    while (!q.empty()) {
        auto u = q.front();
        q.pop();
        for (auto v : g.neighbors(u))
            if (d[static_cast<std::size_t>(v)] < 0) {
                d[static_cast<std::size_t>(v)] = d[static_cast<std::size_t>(u)] + 1;
                q.push(v);
            }
    }
    return d;
}

int tree_diameter(const GraphTopology& g) {
    auto d0 = bfs(g, 0);
    auto far = static_cast<NodeId>(std::max_element(d0.begin(), d0.end()) - d0.begin());
    auto d1 = bfs(g, far);
    return *std::max_element(d1.begin(), d1.end());
}

SolverConfig cfg_with(double damping, double tol = 1e-6, int max_iter = 1000) {
    SolverConfig c;
    c.damping = damping;
    c.tol = tol;
    c.max_iter = max_iter;
    return c;
}

}  // namespace

TEST_SUITE("gabp") {

TEST_CASE("decoupled diagonal system") {
    SparseSymmetricMatrix J(make_topology(2, {}), {2.0, 4.0}, {});
    Matrix h(2, 1, std::vector<double>{2.0, 8.0});
    auto r = gabp_solve(J, h);
    CHECK(r.mu(0, 0) == 1.0);
    CHECK(r.mu(1, 0) == 2.0);
    CHECK(r.iterations == 1);
    CHECK(r.final_delta == 0.0);
    CHECK(r.converged);
}

TEST_CASE("2x2 coupled system") {
    SparseSymmetricMatrix J(make_topology(2, std::vector<EdgePair>{{0, 1}}), {2.0, 2.0}, {1.0});
    Matrix h(2, 1, std::vector<double>{3.0, 3.0});
    auto r = gabp_solve(J, h);
    CHECK(r.converged);
    CHECK(r.mu(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.mu(1, 0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("4-cycle matches dense solve") {
    std::vector<EdgePair> e{{0, 1}, {1, 2}, {2, 3}, {3, 0}};
    SparseSymmetricMatrix J(make_topology(4, e), {3, 3, 3, 3}, {1, 1, 1, 1});
    Matrix h(4, 1, std::vector<double>{1, 0, 0, 0});
    auto r = gabp_solve(J, h);
    CHECK(r.converged);
    CHECK(max_abs_diff(r.mu, dense_solve(J, h)) < 1e-6);
}

TEST_CASE("oracle equivalence on random walk-summable systems") {
    Rng rng(1234);
    for (int rep = 0; rep < 40; ++rep) {
        const std::size_t n = 2 + rng.below(150);
        auto J = random_walk_summable(random_graph(n, rng.uniform(0.01, 0.1), rng), rng.uniform(0.05, 0.9), rng);
        Matrix h = random_matrix(n, 1 + rng.below(3), rng);
        auto r = gabp_solve(J, h);
        REQUIRE(r.converged);
        CHECK(r.final_delta <= 1e-6);
        CHECK(relative_l2(r.mu, dense_solve(J, h)) <= 1e-5);
        for (double p : r.belief_pi.storage()) CHECK(p > 0.0);
    }
}

TEST_CASE("trees are exact without damping") {
    Rng rng(77);
    for (int rep = 0; rep < 25; ++rep) {
        const std::size_t n = 2 + rng.below(60);
        auto topo = random_tree(n, rng);
        // Trees converge for any SPD J; use a loosely walk-summable one.
        auto J = random_walk_summable(topo, rng.uniform(0.3, 0.95), rng);
        Matrix h = random_matrix(n, 2, rng);
        auto r = gabp_solve(J, h, cfg_with(0.0, 1e-12));
        CHECK(r.converged);
        CHECK(r.final_delta <= 1e-12);
        CHECK(r.iterations <= tree_diameter(*topo) + 1);
        CHECK(max_abs_diff(r.mu, dense_solve(J, h)) <= 1e-10);
    }
}

TEST_CASE("damping does not move the fixed point") {
    Rng rng(5);
    int compared = 0;
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t n = 5 + rng.below(80);
        auto J = random_walk_summable(random_graph(n, 0.08, rng), rng.uniform(0.2, 0.9), rng);
        Matrix h = random_matrix(n, 1, rng);
        auto a = gabp_solve(J, h, cfg_with(0.0, 1e-12, 5000));
        if (!a.converged) continue;
        auto b = gabp_solve(J, h, cfg_with(0.5, 1e-12, 5000));
        CHECK(b.converged);
        CHECK(max_abs_diff(a.mu, b.mu) <= 1e-8);
        ++compared;
    }
    CHECK(compared > 20);
}

TEST_CASE("columns are solved independently, bitwise") {
    Rng rng(31);
    auto J = random_walk_summable(random_graph(70, 0.06, rng), 0.85, rng);
    Matrix h = random_matrix(70, 4, rng);
    // Fixed iteration count so every run stops at the same point.
    auto cfg = cfg_with(0.5, 1e-300, 137);
    auto joint = gabp_solve(J, h, cfg);
    for (std::size_t c = 0; c < 4; ++c) {
        Matrix col(70, 1);
        for (std::size_t i = 0; i < 70; ++i) col(i, 0) = h(i, c);
        auto single = gabp_solve(J, col, cfg);
        for (std::size_t i = 0; i < 70; ++i) CHECK(single.mu(i, 0) == joint.mu(i, c));
    }
}

TEST_CASE("scale equivariance") {
    Rng rng(8);
    auto J = random_walk_summable(random_graph(50, 0.1, rng), 0.7, rng);
    Matrix h = random_matrix(50, 2, rng);
    auto cfg = cfg_with(0.5, 1e-13, 5000);
    auto base = gabp_solve(J, h, cfg);
    for (double c : {-3.0, 0.25, 7.5}) {
        Matrix hc = h;
        for (auto& v : hc.storage()) v *= c;
        auto r = gabp_solve(J, hc, cfg);
        Matrix want = base.mu;
        for (auto& v : want.storage()) v *= c;
        CHECK(max_abs_diff(r.mu, want) <= 1e-10 * std::max(1.0, std::abs(c)));
    }
}

TEST_CASE("converged implies final_delta within tol") {
    Rng rng(9);
    for (int rep = 0; rep < 10; ++rep) {
        auto J = random_walk_summable(random_graph(40, 0.1, rng), 0.9, rng);
        auto r = gabp_solve(J, random_matrix(40, 1, rng), cfg_with(0.5, 1e-6, 1 + static_cast<int>(rng.below(60))));
        if (r.converged) CHECK(r.final_delta <= 1e-6);
        else CHECK(r.final_delta > 1e-6);
    }
}

TEST_CASE("non-walk-summable input breaks down with diagnostics") {
    // Triangle with couplings 0.9: alpha_{i\\j} turns negative in iteration 3.
    auto tri = make_topology(3, std::vector<EdgePair>{{0, 1}, {1, 2}, {0, 2}});
    SparseSymmetricMatrix J(tri, {1.0, 1.0, 1.0}, {0.9, 0.9, 0.9});
    Matrix h(3, 1, 1.0);
    try {
        gabp_solve(J, h, cfg_with(0.0));
        FAIL("expected NumericBreakdown");
    } catch (const NumericBreakdown& e) {
        CHECK(e.iteration() == 3);
        CHECK(e.alpha() <= 0.0);
        CHECK(e.from() != e.to());
        CHECK(std::string(e.what()).find("iteration 3") != std::string::npos);
    }
    // Two nodes: exclude-one sums stay at J_ii, the belief precision breaks.
    SparseSymmetricMatrix pair(make_topology(2, std::vector<EdgePair>{{0, 1}}), {1.0, 1.0}, {2.0});
    try {
        gabp_solve(pair, Matrix(2, 1, 1.0), cfg_with(0.0));
        FAIL("expected NumericBreakdown");
    } catch (const NumericBreakdown& e) {
        CHECK(e.alpha() == doctest::Approx(-3.0));
        CHECK(e.from() == e.to());
    }
}

TEST_CASE("input validation") {
    SparseSymmetricMatrix J(make_topology(2, std::vector<EdgePair>{{0, 1}}), {2.0, 2.0}, {1.0});
    Matrix h(2, 1, 1.0);
    h(1, 0) = NAN;
    CHECK_THROWS_AS(gabp_solve(J, h), InputError);
    CHECK_THROWS_AS(gabp_solve(J, Matrix(3, 1)), InputError);
    CHECK_THROWS_AS(gabp_solve(J, Matrix(2, 0)), InputError);
    SparseSymmetricMatrix bad(J.topology, {2.0, 0.0}, {1.0});
    CHECK_THROWS_AS(gabp_solve(bad, Matrix(2, 1, 1.0)), InputError);
    SparseSymmetricMatrix inf(J.topology, {2.0, 2.0}, {INFINITY});
    CHECK_THROWS_AS(gabp_solve(inf, Matrix(2, 1, 1.0)), InputError);
}

TEST_CASE("solver config validation") {
    CHECK_NOTHROW(SolverConfig{}.validate());
    CHECK_THROWS_AS(cfg_with(1.0).validate(), ConfigError);
    CHECK_THROWS_AS(cfg_with(-0.1).validate(), ConfigError);
    CHECK_THROWS_AS(cfg_with(0.5, 0.0).validate(), ConfigError);
    CHECK_THROWS_AS(cfg_with(0.5, 1e-6, 0).validate(), ConfigError);
    SparseSymmetricMatrix J(make_topology(1, {}), {1.0}, {});
    CHECK_THROWS_AS(gabp_solve(J, Matrix(1, 1), cfg_with(1.0)), ConfigError);
}

TEST_CASE("residual") {
    SparseSymmetricMatrix J(make_topology(2, std::vector<EdgePair>{{0, 1}}), {2.0, 2.0}, {1.0});
    Matrix h(2, 1, std::vector<double>{3.0, 3.0});
    CHECK(residual(J, Matrix(2, 1, 1.0), h) <= 1e-12);
    Matrix h2(2, 1, std::vector<double>{-4.0, 1.5});
    CHECK(residual(J, Matrix(2, 1), h2) == 4.0);
    CHECK_THROWS_AS(residual(J, Matrix(2, 2), h), InputError);
}

TEST_CASE("fixed Laplacian is the slow construction and reports partial solves") {
    // Synthetic stand-in with the size and edge count of the Wisconsin graph.
    // The real graph is checked by the benchmark acceptance binary.
    auto ds = synthetic_dataset(251, 8, 5, 0.5, 3);
    Rng rng(2);
    Matrix h = random_matrix(251, 8, rng);
    auto lap = build_fixed(Construction::laplacian, ds.features, ds.topology);
    auto dd = build_fixed(Construction::diag_dominant, ds.features, ds.topology);
    auto rl = gabp_solve(lap.J, h, SolverConfig{});
    auto rd = gabp_solve(dd.J, h, SolverConfig{});
    CHECK(rd.converged);
    CHECK(rl.iterations > 5 * rd.iterations);
    auto capped = gabp_solve(lap.J, h, cfg_with(0.5, 1e-6, rl.iterations / 2));
    CHECK_FALSE(capped.converged);
    CHECK(capped.iterations == rl.iterations / 2);
    CHECK(capped.final_delta > 1e-6);
    CHECK(residual(lap.J, capped.mu, h) > 0.0);
}

}
