#pragma once

#include "tan/graph.hpp"
#include "tan/matrix.hpp"

namespace tanet {

enum class Schedule { synchronous };

struct SolverConfig {
    double tol = 1e-6;
    int max_iter = 1000;
    // Weight kept on the previous message: m <- damping * m + (1 - damping) * m_new.
    // damping = 0 is the undamped update.
    double damping = 0.5;
    Schedule schedule = Schedule::synchronous;

    void validate() const;  // throws ConfigError
};

struct SolveResult {
    Matrix mu;          // N x d
    int iterations = 0;
    bool converged = false;
    double final_delta = 0.0;
    Matrix belief_pi;   // N x d (identical columns: precisions do not depend on h)
};

// Univariate Gaussian belief propagation, one independent system per column
// of h against the shared J, synchronous schedule. Convergence is decided on
// the largest undamped message change |m_new - m| over both message kinds,
// all directed edges and all columns, so tol does not depend on damping.
//
// A non-converged run is not an error: the partial solution is returned with
// converged = false. alpha_{i\j} <= 0 throws NumericBreakdown; non-finite
// input throws InputError.
SolveResult gabp_solve(const SparseSymmetricMatrix& J, const Matrix& h, const SolverConfig& cfg = {});

// max |J mu - h| over all entries.
double residual(const SparseSymmetricMatrix& J, const Matrix& mu, const Matrix& h);

}  // namespace tanet
