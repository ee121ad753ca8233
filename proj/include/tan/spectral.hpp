#pragma once

#include <string>
#include <vector>

#include "tan/graph.hpp"

namespace tanet {

struct WalkSummabilityReport {
    double spectral_radius = 0.0;  // rho(|I - D^{-1/2} J D^{-1/2}|)
    bool normalized = true;
    int iterations_used = 0;
    bool converged = false;

    bool walk_summable() const noexcept { return spectral_radius < 1.0; }
};

// Power iteration on R = |I - J~| with J~ the unit-diagonal rescaling of J.
// R is nonnegative and symmetric; iterating on R + I keeps the Perron root
// dominant even when R has a -rho eigenvalue (bipartite supports).
// Throws DomainError if some J_ii <= 0.
WalkSummabilityReport spectral_radius_abs_residual(const SparseSymmetricMatrix& J, double tol = 1e-9,
                                                   int max_iter = 10'000);

struct NodeOrdering {
    std::vector<NodeId> order;
    std::string warning;  // empty unless a degenerate fallback was used
};

// Sorts nodes by the second eigenvector of the normalized Laplacian built on
// the |J_ij| weights of J's off-diagonal support. Ties go to the lower id.
NodeOrdering fiedler_order(const SparseSymmetricMatrix& J, double tol = 1e-10, int max_iter = 20'000);

}  // namespace tanet
