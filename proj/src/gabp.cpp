#include "tan/gabp.hpp"

#include <algorithm>
#include <cmath>

#include "tan/errors.hpp"

namespace tanet {

void SolverConfig::validate() const {
    if (!(tol > 0.0)) throw ConfigError("SolverConfig: tol must be > 0");
    if (max_iter < 1) throw ConfigError("SolverConfig: max_iter must be >= 1");
    if (!(damping >= 0.0 && damping < 1.0)) throw ConfigError("SolverConfig: damping must lie in [0, 1)");
}

SolveResult gabp_solve(const SparseSymmetricMatrix& J, const Matrix& h, const SolverConfig& cfg) {
    cfg.validate();
    const auto& g = J.graph();
    const std::size_t n = g.node_count();
    const std::size_t d = h.cols();
    if (h.rows() != n) {
        throw InputError("gabp_solve: h has " + std::to_string(h.rows()) + " rows, J has " + std::to_string(n) +
                         " nodes");
    }
    if (d == 0) throw InputError("gabp_solve: h needs at least one column");
    if (!J.all_finite()) throw InputError("gabp_solve: J contains NaN or Inf");
    if (!h.all_finite()) throw InputError("gabp_solve: h contains NaN or Inf");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(J.diagonal[i] > 0.0)) {
            throw InputError("gabp_solve: J_ii must be positive (node " + std::to_string(i) + ")");
        }
    }

    const std::size_t m = g.directed_count();
    // Precision messages do not depend on h, so one pi per directed edge
    // serves every column; eta is stored edge-major, column-minor.
    std::vector<double> pi(m, 0.0), pi_next(m);
    std::vector<double> eta(m * d, 0.0), eta_next(m * d);
    std::vector<double> alpha(n);
    std::vector<double> beta(n * d);

    const double keep = cfg.damping;
    const double take = 1.0 - cfg.damping;

    auto gather = [&]() {
        for (std::size_t i = 0; i < n; ++i) {
            const auto in = g.incoming(static_cast<NodeId>(i));
            double a = J.diagonal[i];
            for (const auto k : in) a += pi[static_cast<std::size_t>(k)];
            alpha[i] = a;
            double* b = beta.data() + i * d;
            const auto hi = h.row(i);
            for (std::size_t c = 0; c < d; ++c) b[c] = hi[c];
            for (const auto k : in) {
                const double* ek = eta.data() + static_cast<std::size_t>(k) * d;
                for (std::size_t c = 0; c < d; ++c) b[c] += ek[c];
            }
        }
    };

    SolveResult res;
    for (int it = 1; it <= cfg.max_iter; ++it) {
        gather();
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto in = g.incoming(static_cast<NodeId>(i));
            const auto out = g.outgoing(static_cast<NodeId>(i));
            const auto ed = g.incident_edges(static_cast<NodeId>(i));
            const double* b = beta.data() + i * d;
            for (std::size_t s = 0; s < in.size(); ++s) {
                const auto rin = static_cast<std::size_t>(in[s]);
                const auto o = static_cast<std::size_t>(out[s]);
                const double jij = J.off_diagonal[static_cast<std::size_t>(ed[s])];
                const double a = alpha[i] - pi[rin];
                if (!(a > 0.0)) throw NumericBreakdown(it, static_cast<NodeId>(i), g.target(out[s]), a);

                const double p_new = -jij * jij / a;
                const double p_upd = keep * pi[o] + take * p_new;
                delta = std::max(delta, std::abs(p_new - pi[o]));
                pi_next[o] = p_upd;

                const double f = -jij / a;
                const double* e_in = eta.data() + rin * d;
                const double* e_old = eta.data() + o * d;
                double* e_out = eta_next.data() + o * d;
                for (std::size_t c = 0; c < d; ++c) {
                    const double e_new = f * (b[c] - e_in[c]);
                    const double e_upd = keep * e_old[c] + take * e_new;
                    delta = std::max(delta, std::abs(e_new - e_old[c]));
                    e_out[c] = e_upd;
                }
            }
        }
        pi.swap(pi_next);
        eta.swap(eta_next);
        res.iterations = it;
        res.final_delta = delta;
        if (delta <= cfg.tol) {
            res.converged = true;
            break;
        }
    }

    gather();
    res.mu = Matrix(n, d);
    res.belief_pi = Matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(alpha[i] > 0.0)) throw NumericBreakdown(res.iterations, static_cast<NodeId>(i), static_cast<NodeId>(i), alpha[i]);
        for (std::size_t c = 0; c < d; ++c) {
            res.belief_pi(i, c) = alpha[i];
            res.mu(i, c) = beta[i * d + c] / alpha[i];
        }
    }
    return res;
}

double residual(const SparseSymmetricMatrix& J, const Matrix& mu, const Matrix& h) {
    if (!mu.same_shape(h) || mu.rows() != J.size()) {
        throw InputError("residual: shape mismatch (mu " + std::to_string(mu.rows()) + "x" + std::to_string(mu.cols()) +
                         ", h " + std::to_string(h.rows()) + "x" + std::to_string(h.cols()) + ", J " +
                         std::to_string(J.size()) + ")");
    }
    const Matrix jm = J.multiply(mu);
    double r = 0.0;
    for (std::size_t k = 0; k < jm.size(); ++k) r = std::max(r, std::abs(jm.data()[k] - h.data()[k]));
    return r;
}

}  // namespace tanet
