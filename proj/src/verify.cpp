#include "tan/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include <Eigen/Dense>

#include "tan/errors.hpp"
#include "tan/fixed_point.hpp"
#include "tan/spectral.hpp"

namespace tanet {

TopologyPtr random_graph(std::size_t n, double density, Rng& rng) {
    std::vector<EdgePair> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (rng.uniform() < density) edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
    return make_topology(n, edges);
}

TopologyPtr random_tree(std::size_t n, Rng& rng) {
    std::vector<EdgePair> edges;
    for (std::size_t i = 1; i < n; ++i)
        edges.push_back({static_cast<NodeId>(rng.below(i)), static_cast<NodeId>(i)});
    return make_topology(n, edges);
}

SparseSymmetricMatrix random_walk_summable(TopologyPtr topo, double rho, Rng& rng) {
    const std::size_t n = topo->node_count(), E = topo->edge_count();
    std::vector<double> off(E);
    for (auto& v : off) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.0);
    SparseSymmetricMatrix unit(topo, std::vector<double>(n, 1.0), off);
    if (E > 0) {
        const double r0 = spectral_radius_abs_residual(unit, 1e-12, 100'000).spectral_radius;
        for (auto& v : unit.off_diagonal) v *= rho / r0;
    }
    std::vector<double> s(n);
    for (auto& v : s) v = rng.uniform(0.5, 2.0);
    for (std::size_t i = 0; i < n; ++i) unit.diagonal[i] = s[i] * s[i];
    for (std::size_t e = 0; e < E; ++e) {
        auto id = static_cast<EdgeId>(e);
        unit.off_diagonal[e] *= s[static_cast<std::size_t>(topo->lo(id))] * s[static_cast<std::size_t>(topo->hi(id))];
    }
    return unit;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
    Matrix m(rows, cols);
    for (auto& v : m.storage()) v = scale * rng.normal();
    return m;
}

namespace {

Eigen::MatrixXd to_eigen(const SparseSymmetricMatrix& J) {
    const Matrix d = J.to_dense();
    Eigen::MatrixXd m(d.rows(), d.cols());
    for (std::size_t r = 0; r < d.rows(); ++r)
        for (std::size_t c = 0; c < d.cols(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = d(r, c);
    return m;
}

Matrix from_eigen(const Eigen::MatrixXd& m) {
    Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    return out;
}

}  // namespace

Matrix dense_solve(const SparseSymmetricMatrix& J, const Matrix& B) {
    Eigen::MatrixXd b(B.rows(), B.cols());
    for (std::size_t r = 0; r < B.rows(); ++r)
        for (std::size_t c = 0; c < B.cols(); ++c) b(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = B(r, c);
    return from_eigen(to_eigen(J).ldlt().solve(b));
}

Matrix dense_inverse(const SparseSymmetricMatrix& J) {
    const auto n = static_cast<Eigen::Index>(J.size());
    return from_eigen(to_eigen(J).ldlt().solve(Eigen::MatrixXd::Identity(n, n)));
}

double dense_abs_residual_radius(const SparseSymmetricMatrix& J) {
    Eigen::MatrixXd m = to_eigen(J);
    const auto n = m.rows();
    Eigen::VectorXd s = m.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd R = (Eigen::MatrixXd::Identity(n, n) - s.asDiagonal() * m * s.asDiagonal()).cwiseAbs();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double relative_l2(const Matrix& got, const Matrix& want) {
    if (!got.same_shape(want)) throw InputError("relative_l2: shape mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double d = got.data()[i] - want.data()[i];
        num += d * d;
        den += want.data()[i] * want.data()[i];
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

GradCheck finite_difference_check(const std::function<double()>& loss, const std::vector<Tensor>& params, double step,
                                  double floor) {
    GradCheck out;
    for (auto p : params) {
        const Matrix analytic = p.has_grad() ? p.grad() : Matrix(p.rows(), p.cols());
        auto& v = p.mutable_value().storage();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double keep = v[i];
            v[i] = keep + step;
            const double up = loss();
            v[i] = keep - step;
            const double down = loss();
            v[i] = keep;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic.data()[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            ++out.checked;
            if (rel > out.worst_rel) {
                out.worst_rel = rel;
                out.worst_name = p.name() + "[" + std::to_string(i) + "]";
            }
        }
    }
    return out;
}

bool VerifyReport::passed() const noexcept {
    return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed(); });
}

SuiteResult verify_solver_oracle(const VerifyOptions& opt) {
    SuiteResult r{"solver-oracle", 0, 0, 0.0, 1e-5, ""};
    Rng rng(opt.seed ^ 0x501e);
    const std::size_t count = opt.quick ? 20 : 100;
    const std::size_t max_n = opt.quick ? 60 : 200;
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t n = 2 + rng.below(max_n - 1);
        const double density = rng.uniform(0.01, 0.1);
        auto J = random_walk_summable(random_graph(n, density, rng), rng.uniform(0.1, 0.9), rng);
        Matrix h = random_matrix(n, 1, rng);
        auto res = gabp_solve(J, h, SolverConfig{});
        const double err = relative_l2(res.mu, dense_solve(J, h));
        ++r.instances;
        r.worst = std::max(r.worst, err);
        if (!res.converged || !(err <= r.tolerance)) {
            ++r.failures;
            if (r.detail.empty())
                r.detail = "instance " + std::to_string(k) + " (n=" + std::to_string(n) + "): relative error " +
                           std::to_string(err) + (res.converged ? "" : ", not converged");
        }
    }
    return r;
}

SuiteResult verify_walk_summability(const VerifyOptions& opt) {
    SuiteResult r{"walk-summability", 0, 0, 0.0, 1.0, ""};
    Rng rng(opt.seed ^ 0x3a1c);
    const std::size_t per = opt.quick ? 20 : 100;
    BuildOptions bo;
    for (Construction c : {Construction::pairwise_normal, Construction::diag_dominant, Construction::laplacian}) {
        for (std::size_t k = 0; k < per; ++k) {
            const std::size_t n = 3 + rng.below(opt.quick ? 30 : 60);
            auto topo = random_graph(n, rng.uniform(0.05, 0.4), rng);
            const std::size_t d_model = 6, d_sim = 4;
            Matrix x = random_matrix(n, d_model, rng, rng.uniform(0.2, 3.0));
            const bool learned = k % 2 == 1;
            PrecisionBuild b;
            if (learned) {
                auto sim = default_similarity(c);
                if (c != Construction::laplacian && k % 4 == 3) sim.kind = SimilarityKind::mlp;
                auto p = init_learned_params(sim, d_model, d_sim, rng, "v");
                // Push parameters away from the init scale.
                for (auto t : p.tensors())
                    for (auto& v : t.mutable_value().storage()) v *= rng.uniform(0.5, 4.0);
                b = build_learned(c, x, topo, p, sim, bo);
            } else {
                b = build_fixed(c, x, topo, bo);
            }
            if (opt.fault == Fault::broken_builder && c == Construction::diag_dominant && topo->edge_count() > 0) {
                // Negative control: couplings inflated past the diagonal.
                for (auto& v : b.J.off_diagonal) v *= 8.0;
                b.report = spectral_radius_abs_residual(b.J);
            }
            ++r.instances;
            const double rho = b.report.spectral_radius;
            r.worst = std::max(r.worst, rho);
            std::string what;
            if (!b.report.walk_summable()) {
                what = "walk-summability violated by " + std::string(to_string(c)) + (learned ? " (learned)" : " (fixed)") +
                       ": rho(|I-J~|) = " + std::to_string(rho);
            } else if (c == Construction::diag_dominant) {
                const auto& g = *b.J.topology;
                for (std::size_t i = 0; i < n && what.empty(); ++i) {
                    double s = 0.0;
                    for (auto e : g.incident_edges(static_cast<NodeId>(i))) s += std::abs(b.J.off_diagonal[static_cast<std::size_t>(e)]);
                    if (b.J.diagonal[i] - s < bo.slack * (1.0 - 1e-12)) {
                        what = "row dominance below slack at node " + std::to_string(i);
                    }
                }
            }
            if (!what.empty()) {
                ++r.failures;
                if (r.detail.empty()) r.detail = what;
            }
        }
    }
    return r;
}

namespace {

// Loss sum(W .* mu) through one learned build and the implicit node.
struct GradInstance {
    Construction c;
    TopologyPtr topo;
    Tensor x, w_obs;
    LearnedPrecisionParams p;
    SimilarityConfig sim;
    Matrix weights;
    SolverConfig solver;

    double eval(bool record) const {
        Tape t(record);
        auto J = build_learned_tensors(t, c, x, topo, p, sim);
        Tensor h = matmul(t, x, w_obs);
        Tensor mu = gabp_fixed_point(t, J, h, solver);
        Tensor loss = weighted_sum(t, mu, weights);
        if (record) t.backward(loss);
        return loss.item();
    }

    std::vector<Tensor> params() const {
        auto v = p.tensors();
        v.push_back(w_obs);
        v.push_back(x);
        return v;
    }
};

}  // namespace

SuiteResult verify_gradients(const VerifyOptions& opt) {
    SuiteResult r{"implicit-gradient", 0, 0, 0.0, 1e-3, ""};
    Rng rng(opt.seed ^ 0x96ad);
    const std::size_t per = opt.quick ? 3 : 20;
    for (Construction c : {Construction::pairwise_normal, Construction::diag_dominant, Construction::laplacian}) {
        for (std::size_t k = 0; k < per; ++k) {
            const std::size_t n = 4 + rng.below(9);
            const std::size_t d_model = 4, d = 3;
            GradInstance g;
            g.c = c;
            g.topo = random_graph(n, 0.35, rng);
            g.sim = default_similarity(c);
            g.x = Tensor::parameter(random_matrix(n, d_model, rng), "x");
            g.w_obs = Tensor::parameter(random_matrix(d_model, d, rng), "w_obs");
            g.p = init_learned_params(g.sim, d_model, d, rng, "p");
            g.weights = random_matrix(n, d, rng);
            g.solver.tol = 1e-13;
            g.solver.max_iter = 20'000;
            g.eval(true);
            auto check = finite_difference_check([&] { return g.eval(false); }, g.params());
            ++r.instances;
            r.worst = std::max(r.worst, check.worst_rel);
            if (!(check.worst_rel <= r.tolerance)) {
                ++r.failures;
                if (r.detail.empty())
                    r.detail = std::string(to_string(c)) + " instance " + std::to_string(k) + ": " + check.worst_name +
                               " relative error " + std::to_string(check.worst_rel);
            }
        }
    }
    return r;
}

VerifyReport run_verify(const VerifyOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    VerifyReport rep;
    rep.suites.push_back(verify_solver_oracle(opt));
    rep.suites.push_back(verify_walk_summability(opt));
    rep.suites.push_back(verify_gradients(opt));
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

void print_report(std::ostream& out, const VerifyReport& r) {
    for (const auto& s : r.suites) {
        out << (s.passed() ? "PASS " : "FAIL ") << s.name << ": " << s.instances << " instances, " << s.failures
            << " failures, worst " << s.worst << " (tolerance " << s.tolerance << ")";
        if (!s.detail.empty()) out << " -- " << s.detail;
        out << '\n';
    }
    out << (r.passed() ? "all suites passed" : "verification FAILED") << " in " << r.seconds << " s\n";
}

void write_report_csv(std::ostream& out, const VerifyReport& r) {
    out << "suite,instances,failures,worst,tolerance,status,detail\n";
    for (const auto& s : r.suites) {
        std::string d = s.detail;
        std::replace(d.begin(), d.end(), ',', ';');
        out << s.name << ',' << s.instances << ',' << s.failures << ',' << s.worst << ',' << s.tolerance << ','
            << (s.passed() ? "pass" : "fail") << ',' << d << '\n';
    }
}

}  // namespace tanet
