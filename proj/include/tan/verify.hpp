#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tan/builders.hpp"
#include "tan/gabp.hpp"
#include "tan/rng.hpp"

namespace tanet {

// --- random instances ----------------------------------------------------------

// Erdos-Renyi support with edge probability density.
TopologyPtr random_graph(std::size_t n, double density, Rng& rng);
// Uniform random recursive tree.
TopologyPtr random_tree(std::size_t n, Rng& rng);

// Random J on topo with rho(|I - J~|) = rho (up to power-iteration accuracy)
// and a random positive diagonal scaling.
SparseSymmetricMatrix random_walk_summable(TopologyPtr topo, double rho, Rng& rng);

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0);

// --- dense oracles (Eigen) -----------------------------------------------------

// Direct solve of J X = B with a dense LDLT factorization.
Matrix dense_solve(const SparseSymmetricMatrix& J, const Matrix& B);
Matrix dense_inverse(const SparseSymmetricMatrix& J);
// rho(|I - D^{-1/2} J D^{-1/2}|) from a dense symmetric eigensolver.
double dense_abs_residual_radius(const SparseSymmetricMatrix& J);
double relative_l2(const Matrix& got, const Matrix& want);

// --- finite differences --------------------------------------------------------

struct GradCheck {
    std::size_t checked = 0;
    double worst_rel = 0.0;
    std::string worst_name;
};

// Central differences of loss() over every entry of params against analytic
// gradients already present in the params' grad buffers.
// rel = |a - n| / max(|a|, |n|, floor).
GradCheck finite_difference_check(const std::function<double()>& loss, const std::vector<Tensor>& params,
                                  double step = 1e-5, double floor = 1e-6);

// --- suites ----------------------------------------------------------------------

enum class Fault { none, broken_builder };

struct VerifyOptions {
    bool quick = false;
    Fault fault = Fault::none;
    std::uint64_t seed = 0;
};

struct SuiteResult {
    std::string name;
    std::size_t instances = 0;
    std::size_t failures = 0;
    double worst = 0.0;
    double tolerance = 0.0;
    std::string detail;  // first violated invariant, if any

    bool passed() const noexcept { return failures == 0; }
};

struct VerifyReport {
    std::vector<SuiteResult> suites;
    double seconds = 0.0;

    bool passed() const noexcept;
};

// Solver vs dense solve, walk-summability of every construction, implicit
// gradients vs finite differences.
SuiteResult verify_solver_oracle(const VerifyOptions& opt);
SuiteResult verify_walk_summability(const VerifyOptions& opt);
SuiteResult verify_gradients(const VerifyOptions& opt);
VerifyReport run_verify(const VerifyOptions& opt);

void print_report(std::ostream& out, const VerifyReport& r);
void write_report_csv(std::ostream& out, const VerifyReport& r);

}  // namespace tanet
