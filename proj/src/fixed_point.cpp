#include "tan/fixed_point.hpp"

#include "tan/errors.hpp"

namespace tanet {

SparseSymmetricMatrix PrecisionTensors::matrix() const {
    if (!topology) throw InputError("PrecisionTensors: null topology");
    if (diag.cols() != 1 || off.cols() != 1) throw InputError("PrecisionTensors: diag and off must be column vectors");
    return SparseSymmetricMatrix(topology, diag.value().storage(), off.value().storage());
}

Tensor gabp_fixed_point(Tape& tape, const PrecisionTensors& J, const Tensor& h, const SolverConfig& cfg,
                        std::shared_ptr<FixedPointStats> stats) {
    SparseSymmetricMatrix jm = J.matrix();
    SolveResult fwd = gabp_solve(jm, h.value(), cfg);
    if (!stats) stats = std::make_shared<FixedPointStats>();
    stats->forward_iterations = fwd.iterations;
    stats->forward_converged = fwd.converged;
    stats->forward_delta = fwd.final_delta;
    stats->forward_residual = residual(jm, fwd.mu, h.value());

    Tensor out = make_result(tape, std::move(fwd.mu), {&J.diag, &J.off, &h}, "gabp_fixed_point");
    if (!out.requires_grad()) {
        stats->retained_doubles = 0;
        return out;
    }
    stats->retained_doubles = jm.diagonal.size() + jm.off_diagonal.size() + out.value().size();
    tape.record([jm = std::move(jm), dn = J.diag.node(), en = J.off.node(), hn = h.node(), on = out.node(), cfg,
                 stats] {
        const Matrix& G = on->grad;
        if (G.empty()) return;
        SolveResult bwd = gabp_solve(jm, G, cfg);
        stats->backward_ran = true;
        stats->backward_iterations = bwd.iterations;
        stats->backward_converged = bwd.converged;
        stats->backward_delta = bwd.final_delta;
        const Matrix& g = bwd.mu;
        const Matrix& mu = on->value;
        const std::size_t d = mu.cols();
        if (hn->requires_grad) {
            auto& gh = hn->ensure_grad();
            for (std::size_t k = 0; k < gh.size(); ++k) gh.data()[k] += g.data()[k];
        }
        if (dn->requires_grad) {
            auto& gd = dn->ensure_grad();
            for (std::size_t i = 0; i < mu.rows(); ++i) {
                double s = 0.0;
                for (std::size_t c = 0; c < d; ++c) s += g(i, c) * mu(i, c);
                gd(i, 0) -= s;
            }
        }
        if (en->requires_grad) {
            auto& ge = en->ensure_grad();
            const auto& topo = jm.graph();
            for (std::size_t e = 0; e < topo.edge_count(); ++e) {
                const auto a = static_cast<std::size_t>(topo.lo(static_cast<EdgeId>(e)));
                const auto b = static_cast<std::size_t>(topo.hi(static_cast<EdgeId>(e)));
                double s = 0.0;
                for (std::size_t c = 0; c < d; ++c) s += g(a, c) * mu(b, c) + g(b, c) * mu(a, c);
                ge(e, 0) -= s;
            }
        }
    });
    return out;
}

}  // namespace tanet
