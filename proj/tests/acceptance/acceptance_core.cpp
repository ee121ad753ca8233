// Acceptance checks that need no external data: solver oracle, implicit
// gradients, walk-summability by construction, implicit vs unrolled
// gradients on trees and the iteration-independent memory footprint.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "alloc_counter.hpp"
#include "support.hpp"
#include "tan/fixed_point.hpp"

using namespace tanet;
using namespace tanet::testing;

namespace {

constexpr double kOracleTol = 1e-5;
constexpr double kOracleSeconds = 120.0;
constexpr double kGradTol = 1e-3;
constexpr double kWalkTol = 1.0;  // rho strictly below
constexpr double kGradSeconds = 300.0;
constexpr double kWalkSeconds = 120.0;
constexpr double kTreeTol = 1e-6;
constexpr std::size_t kTrees = 20;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
    std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    if (!ok) ++failures;
}

template <class F>
auto timed(F&& f, double& seconds) {
    const auto t0 = std::chrono::steady_clock::now();
    auto r = f();
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::string fmt(const char* f, double a, double b, double c) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

void suite_criterion(const std::string& name, SuiteResult (*fn)(const VerifyOptions&), double tol, double limit) {
    double s = 0.0;
    auto r = timed([&] { return fn(VerifyOptions{}); }, s);
    std::string d = std::to_string(r.instances) + " instances, " + std::to_string(r.failures) + " failures, " +
                    fmt("worst %.3g (tol %.3g), %.2f s", r.worst, r.tolerance, s) + fmt(" (limit %.0f s)", limit, 0, 0);
    if (!r.detail.empty()) d += "; " + r.detail;
    report(r.passed() && r.worst <= tol && s <= limit, name, d);
}

// Implicit-gradient vs unrolled GaBP on random trees. On a tree undamped
// GaBP is exact after diameter + 1 sweeps, so n + 1 sweeps suffice.
void tree_agreement() {
    Rng rng(0x7ee5);
    double worst = 0.0;
    for (std::size_t k = 0; k < kTrees; ++k) {
        const std::size_t n = 3 + rng.below(18);
        auto topo = random_tree(n, rng);
        auto Jm = random_walk_summable(topo, rng.uniform(0.3, 0.9), rng);
        Matrix h = random_matrix(n, 3, rng), W = random_matrix(n, 3, rng);
        PrecisionTensors J{topo, Tensor::parameter(Matrix(n, 1, Jm.diagonal), "diag"),
                           Tensor::parameter(Matrix(topo->edge_count(), 1, Jm.off_diagonal), "off")};
        auto ht = Tensor::parameter(h, "h");
        SolverConfig cfg;
        cfg.tol = 1e-15;
        cfg.max_iter = 10'000;
        cfg.damping = 0.0;
        Tape t;
        t.backward(weighted_sum(t, gabp_fixed_point(t, J, ht, cfg), W));
        auto ref = unrolled_gabp_gradient(Jm, h, W, static_cast<int>(n) + 1);

        double num = 0.0, den = 0.0;
        auto acc = [&](double a, double b) {
            num += (a - b) * (a - b);
            den += b * b;
        };
        for (std::size_t i = 0; i < n; ++i) acc(J.diag.grad()(i, 0), ref.diag[i]);
        for (std::size_t e = 0; e < topo->edge_count(); ++e) acc(J.off.grad()(e, 0), ref.off[e]);
        for (std::size_t i = 0; i < h.size(); ++i) acc(ht.grad().storage()[i], ref.h.storage()[i]);
        worst = std::max(worst, std::sqrt(num / den));
    }
    report(worst <= kTreeTol, "implicit-vs-unrolled",
           std::to_string(kTrees) + " trees, worst relative difference " + fmt("%.3g (tol %.3g)", worst, kTreeTol, 0));
}

// Live bytes held by the tape after the forward solve, and allocations made
// by the solve, for several iteration caps on a system that never meets tol.
void memory_independence() {
    std::vector<EdgePair> path;
    const std::size_t n = 200;
    for (std::size_t i = 0; i + 1 < n; ++i) path.push_back({static_cast<NodeId>(i), static_cast<NodeId>(i + 1)});
    auto topo = make_topology(n, path);
    Rng rng(3);
    auto Jm = random_walk_summable(topo, 0.999, rng);
    Matrix h = random_matrix(n, 4, rng);

    std::vector<std::size_t> live, allocs;
    std::vector<int> iters;
    for (int cap : {5, 50, 500}) {
        SolverConfig cfg;
        cfg.tol = 1e-300;
        cfg.max_iter = cap;
        PrecisionTensors J{topo, Tensor::parameter(Matrix(n, 1, Jm.diagonal), "diag"),
                           Tensor::parameter(Matrix(topo->edge_count(), 1, Jm.off_diagonal), "off")};
        auto ht = Tensor::parameter(h, "h");
        auto stats = std::make_shared<FixedPointStats>();
        Tape t;
        const std::size_t b0 = alloc_counter::live_bytes(), a0 = alloc_counter::allocations();
        Tensor mu = gabp_fixed_point(t, J, ht, cfg, stats);
        const std::size_t a1 = alloc_counter::allocations(), b1 = alloc_counter::live_bytes();
        allocs.push_back(a1 - a0);
        live.push_back(b1 - b0);
        iters.push_back(stats->forward_iterations);
        t.backward(weighted_sum(t, mu, h));
    }
    const bool ok = live[0] == live[1] && live[1] == live[2] && allocs[0] == allocs[1] && allocs[1] == allocs[2] &&
                    iters[2] == 500;
    report(ok, "iteration-independent-memory",
           "iterations " + std::to_string(iters[0]) + "/" + std::to_string(iters[1]) + "/" + std::to_string(iters[2]) +
               ": retained bytes " + std::to_string(live[0]) + "/" + std::to_string(live[1]) + "/" +
               std::to_string(live[2]) + ", allocations " + std::to_string(allocs[0]) + "/" +
               std::to_string(allocs[1]) + "/" + std::to_string(allocs[2]));
}

}  // namespace

int main() {
    suite_criterion("solver-oracle", verify_solver_oracle, kOracleTol, kOracleSeconds);
    suite_criterion("implicit-gradient", verify_gradients, kGradTol, kGradSeconds);
    suite_criterion("walk-summability", verify_walk_summability, kWalkTol, kWalkSeconds);
    tree_agreement();
    memory_independence();
    return failures == 0 ? 0 : 1;
}
