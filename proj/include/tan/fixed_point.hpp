#pragma once

#include <memory>

#include "tan/autograd.hpp"
#include "tan/gabp.hpp"
#include "tan/graph.hpp"

namespace tanet {

// Differentiable precision matrix: diag is N x 1, off is E x 1 (one entry
// per undirected edge, entering J symmetrically).
struct PrecisionTensors {
    TopologyPtr topology;
    Tensor diag;
    Tensor off;

    SparseSymmetricMatrix matrix() const;
};

struct FixedPointStats {
    int forward_iterations = 0;
    bool forward_converged = false;
    double forward_delta = 0.0;
    double forward_residual = 0.0;
    bool backward_ran = false;
    int backward_iterations = 0;
    bool backward_converged = false;
    double backward_delta = 0.0;
    // Doubles held by the node between forward and backward (J and mu).
    std::size_t retained_doubles = 0;
};

// mu = J^{-1} h by GaBP, differentiated implicitly at the fixed point: the
// backward pass solves J g = dL/dmu with the same solver and config, then
// dL/dh = g, dL/dJ_ii = -sum_c g_i mu_i, dL/dJ_ij = -sum_c (g_i mu_j + g_j mu_i).
// Only J, mu and the stats survive the forward solve. A non-converged forward
// still records its backward (stats flag it).
Tensor gabp_fixed_point(Tape& tape, const PrecisionTensors& J, const Tensor& h, const SolverConfig& cfg,
                        std::shared_ptr<FixedPointStats> stats = nullptr);

}  // namespace tanet
