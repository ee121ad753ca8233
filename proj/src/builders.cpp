#include "tan/builders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tan/errors.hpp"

namespace tanet {

std::string_view to_string(Construction c) {
    switch (c) {
        case Construction::pairwise_normal: return "pairwise_normal";
        case Construction::diag_dominant: return "diag_dominant";
        case Construction::laplacian: return "laplacian";
    }
    return "?";
}

Construction parse_construction(std::string_view name) {
    if (name == "pairwise_normal") return Construction::pairwise_normal;
    if (name == "diag_dominant") return Construction::diag_dominant;
    if (name == "laplacian") return Construction::laplacian;
    throw ConfigError("unknown construction '" + std::string(name) +
                      "' (expected pairwise_normal, diag_dominant or laplacian)");
}

std::string_view to_string(SimilarityKind k) {
    switch (k) {
        case SimilarityKind::cosine: return "cosine";
        case SimilarityKind::gaussian_kernel: return "gaussian_kernel";
        case SimilarityKind::mlp: return "mlp";
    }
    return "?";
}

SimilarityKind parse_similarity(std::string_view name) {
    if (name == "cosine") return SimilarityKind::cosine;
    if (name == "gaussian_kernel") return SimilarityKind::gaussian_kernel;
    if (name == "mlp") return SimilarityKind::mlp;
    throw ConfigError("unknown similarity '" + std::string(name) + "' (expected cosine, gaussian_kernel or mlp)");
}

SimilarityConfig default_similarity(Construction c) {
    SimilarityConfig s;
    s.kind = (c == Construction::laplacian) ? SimilarityKind::gaussian_kernel : SimilarityKind::cosine;
    return s;
}

namespace {

// sqrt(a b) for a, b > 0, split only when the product would underflow.
double geometric_mean_sqrt(double a, double b) {
    const double ab = a * b;
    return ab >= std::numeric_limits<double>::min() ? std::sqrt(ab) : std::sqrt(a) * std::sqrt(b);
}

void require_size(std::span<const double> v, std::size_t n, const char* what) {
    if (v.size() != n) {
        throw InputError(std::string(what) + ": expected " + std::to_string(n) + " values, got " +
                         std::to_string(v.size()));
    }
}

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw InputError(std::string(what) + ": non-finite value");
    }
}

}  // namespace

SparseSymmetricMatrix build_pairwise_normal(TopologyPtr topo, std::span<const double> a, std::span<const double> b,
                                            std::span<const double> c, double margin) {
    const auto& g = *topo;
    const std::size_t E = g.edge_count();
    require_size(a, E, "build_pairwise_normal(a)");
    require_size(b, E, "build_pairwise_normal(b)");
    require_size(c, E, "build_pairwise_normal(c)");
    require_finite(b, "build_pairwise_normal(b)");
    if (!(margin > 1.0)) throw InputError("build_pairwise_normal: margin must exceed 1");
    std::vector<double> diag(g.node_count(), 0.0), off(E);
    for (std::size_t e = 0; e < E; ++e) {
        if (!(a[e] > 0.0) || !(c[e] > 0.0) || !std::isfinite(a[e]) || !std::isfinite(c[e])) {
            throw InputError("build_pairwise_normal: a and c must be positive (edge " + std::to_string(e) + ")");
        }
        double be = b[e];
        if (a[e] * c[e] < margin * be * be) be = std::copysign(std::sqrt(a[e] * c[e] / margin), be);
        off[e] = be;
        diag[static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)))] += a[e];
        diag[static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)))] += c[e];
    }
    for (std::size_t i = 0; i < diag.size(); ++i) {
        if (g.degree(static_cast<NodeId>(i)) == 0) diag[i] = 1.0;
    }
    return SparseSymmetricMatrix(std::move(topo), std::move(diag), std::move(off));
}

SparseSymmetricMatrix build_diag_dominant(TopologyPtr topo, std::span<const double> couplings,
                                          std::span<const double> self_confidence, double slack) {
    const auto& g = *topo;
    require_size(couplings, g.edge_count(), "build_diag_dominant(couplings)");
    require_size(self_confidence, g.node_count(), "build_diag_dominant(self_confidence)");
    require_finite(couplings, "build_diag_dominant(couplings)");
    require_finite(self_confidence, "build_diag_dominant(self_confidence)");
    if (!(slack > 0.0)) throw InputError("build_diag_dominant: slack must be positive");
    std::vector<double> diag(g.node_count());
    for (std::size_t i = 0; i < diag.size(); ++i) {
        if (self_confidence[i] < 0.0) throw InputError("build_diag_dominant: self_confidence must be nonnegative");
        double s = 0.0;
        for (const auto e : g.incident_edges(static_cast<NodeId>(i))) s += std::abs(couplings[static_cast<std::size_t>(e)]);
        diag[i] = s + self_confidence[i] + slack;
    }
    return SparseSymmetricMatrix(std::move(topo), std::move(diag),
                                 std::vector<double>(couplings.begin(), couplings.end()));
}

SparseSymmetricMatrix build_laplacian(TopologyPtr topo, std::span<const double> weights, double epsilon_shift,
                                      std::span<const double> diagonal_bump) {
    const auto& g = *topo;
    require_size(weights, g.edge_count(), "build_laplacian(weights)");
    require_finite(weights, "build_laplacian(weights)");
    if (!diagonal_bump.empty()) require_size(diagonal_bump, g.node_count(), "build_laplacian(diagonal_bump)");
    if (!(epsilon_shift > 0.0 && epsilon_shift < 1.0)) throw InputError("build_laplacian: epsilon_shift must lie in (0, 1)");
    std::vector<double> deg(g.node_count(), 0.0);
    for (std::size_t e = 0; e < weights.size(); ++e) {
        if (weights[e] < 0.0) throw InputError("build_laplacian: negative weight on edge " + std::to_string(e));
        deg[static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)))] += weights[e];
        deg[static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)))] += weights[e];
    }
    const double s = 2.0 + epsilon_shift;
    std::vector<double> diag(g.node_count()), off(g.edge_count());
    for (std::size_t i = 0; i < diag.size(); ++i) {
        const double bump = diagonal_bump.empty() ? 0.0 : diagonal_bump[i];
        if (bump < 0.0) throw InputError("build_laplacian: diagonal_bump must be nonnegative");
        diag[i] = (1.0 + epsilon_shift + bump) / s;
    }
    for (std::size_t e = 0; e < off.size(); ++e) {
        const double dl = deg[static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)))];
        const double dh = deg[static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)))];
        off[e] = (weights[e] > 0.0) ? -weights[e] / geometric_mean_sqrt(dl, dh) / s : 0.0;
    }
    return SparseSymmetricMatrix(std::move(topo), std::move(diag), std::move(off));
}

Matrix init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    Matrix w(fan_in, fan_out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (auto& v : w.data()) v = rng.uniform(-bound, bound);
    return w;
}

EdgeMlp init_edge_mlp(std::size_t d_sim, std::size_t hidden, Rng& rng, const std::string& prefix) {
    EdgeMlp m;
    m.w1 = Tensor::parameter(init_weight(2 * d_sim, hidden, rng), prefix + ".mlp.w1");
    m.b1 = Tensor::parameter(Matrix(1, hidden), prefix + ".mlp.b1");
    m.w2 = Tensor::parameter(init_weight(hidden, 1, rng), prefix + ".mlp.w2");
    m.b2 = Tensor::parameter(Matrix(1, 1), prefix + ".mlp.b2");
    return m;
}

Tensor edge_cosine(Tape& t, const Tensor& s, const TopologyPtr& topo) {
    const auto& g = *topo;
    constexpr double kGuard = 1e-12;
    const std::size_t E = g.edge_count(), d = s.cols();
    if (s.rows() != g.node_count()) throw InputError("edge_cosine: one embedding row per node required");
    std::vector<double> norm(s.rows());
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double q = 0.0;
        for (double v : s.value().row(i)) q += v * v;
        norm[i] = std::sqrt(q);
    }
    Matrix v(E, 1);
    std::vector<double> dots(E);
    for (std::size_t e = 0; e < E; ++e) {
        const auto a = static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)));
        const auto b = static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)));
        double q = 0.0;
        for (std::size_t c = 0; c < d; ++c) q += s.value()(a, c) * s.value()(b, c);
        dots[e] = q;
        v(e, 0) = q / (norm[a] * norm[b] + kGuard);
    }
    Tensor out = make_result(t, std::move(v), {&s}, "edge_cosine");
    if (out.requires_grad()) {
        t.record([sn = s.node(), on = out.node(), topo, norm = std::move(norm), dots = std::move(dots)] {
            if (on->grad.empty()) return;
            const auto& g = *topo;
            auto& gs = sn->ensure_grad();
            const Matrix& sv = sn->value;
            const std::size_t d = sv.cols();
            for (std::size_t e = 0; e < g.edge_count(); ++e) {
                const double ge = on->grad(e, 0);
                if (ge == 0.0) continue;
                const auto a = static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)));
                const auto b = static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)));
                const double den = norm[a] * norm[b] + kGuard;
                // d(n_a)/d(s_a) = s_a / n_a, taken as 0 at s_a = 0.
                const double ka = norm[a] > 0.0 ? dots[e] * norm[b] / (norm[a] * den * den) : 0.0;
                const double kb = norm[b] > 0.0 ? dots[e] * norm[a] / (norm[b] * den * den) : 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    gs(a, c) += ge * (sv(b, c) / den - ka * sv(a, c));
                    gs(b, c) += ge * (sv(a, c) / den - kb * sv(b, c));
                }
            }
        });
    }
    return out;
}

Tensor edge_gaussian_kernel(Tape& t, const Tensor& s, const TopologyPtr& topo, double bandwidth) {
    const auto& g = *topo;
    if (!(bandwidth > 0.0)) throw ConfigError("edge_gaussian_kernel: bandwidth must be positive");
    if (s.rows() != g.node_count()) throw InputError("edge_gaussian_kernel: one embedding row per node required");
    const std::size_t E = g.edge_count(), d = s.cols();
    const double inv2b2 = 1.0 / (2.0 * bandwidth * bandwidth);
    Matrix v(E, 1);
    for (std::size_t e = 0; e < E; ++e) {
        const auto a = static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)));
        const auto b = static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)));
        double q = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = s.value()(a, c) - s.value()(b, c);
            q += diff * diff;
        }
        v(e, 0) = std::exp(-q * inv2b2);
    }
    Tensor out = make_result(t, std::move(v), {&s}, "edge_gaussian_kernel");
    if (out.requires_grad()) {
        t.record([sn = s.node(), on = out.node(), topo, inv2b2] {
            if (on->grad.empty()) return;
            const auto& g = *topo;
            auto& gs = sn->ensure_grad();
            const Matrix& sv = sn->value;
            for (std::size_t e = 0; e < g.edge_count(); ++e) {
                const double k = on->grad(e, 0) * on->value(e, 0) * (-2.0 * inv2b2);
                const auto a = static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)));
                const auto b = static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)));
                for (std::size_t c = 0; c < sv.cols(); ++c) {
                    const double diff = sv(a, c) - sv(b, c);
                    gs(a, c) += k * diff;
                    gs(b, c) -= k * diff;
                }
            }
        });
    }
    return out;
}

Tensor edge_concat(Tape& t, const Tensor& s, const TopologyPtr& topo, bool reversed) {
    const auto& g = *topo;
    const std::size_t E = g.edge_count(), d = s.cols();
    Matrix v(E, 2 * d);
    for (std::size_t e = 0; e < E; ++e) {
        auto first = static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)));
        auto second = static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)));
        if (reversed) std::swap(first, second);
        for (std::size_t c = 0; c < d; ++c) {
            v(e, c) = s.value()(first, c);
            v(e, d + c) = s.value()(second, c);
        }
    }
    Tensor out = make_result(t, std::move(v), {&s}, "edge_concat");
    if (out.requires_grad()) {
        t.record([sn = s.node(), on = out.node(), topo, reversed] {
            if (on->grad.empty()) return;
            const auto& g = *topo;
            auto& gs = sn->ensure_grad();
            const std::size_t d = sn->value.cols();
            for (std::size_t e = 0; e < g.edge_count(); ++e) {
                auto first = static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)));
                auto second = static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)));
                if (reversed) std::swap(first, second);
                for (std::size_t c = 0; c < d; ++c) {
                    gs(first, c) += on->grad(e, c);
                    gs(second, c) += on->grad(e, d + c);
                }
            }
        });
    }
    return out;
}

namespace {

Tensor mlp_head(Tape& t, const Tensor& pairs, const EdgeMlp& m) {
    Tensor hidden = leaky_relu(t, add_bias(t, matmul(t, pairs, m.w1), m.b1));
    return add_bias(t, matmul(t, hidden, m.w2), m.b2);
}

}  // namespace

Tensor edge_similarity(Tape& t, const Tensor& s, const TopologyPtr& topo, const SimilarityConfig& cfg,
                       const EdgeMlp* mlp) {
    switch (cfg.kind) {
        case SimilarityKind::cosine: return edge_cosine(t, s, topo);
        case SimilarityKind::gaussian_kernel: return edge_gaussian_kernel(t, s, topo, cfg.bandwidth);
        case SimilarityKind::mlp: {
            if (!mlp) throw ConfigError("edge_similarity: mlp similarity requires EdgeMlp parameters");
            Tensor fwd = mlp_head(t, edge_concat(t, s, topo, false), *mlp);
            Tensor rev = mlp_head(t, edge_concat(t, s, topo, true), *mlp);
            return scale(t, add(t, fwd, rev), 0.5);
        }
    }
    throw ConfigError("edge_similarity: unknown kind");
}

std::vector<double> similarity_scores(const Matrix& s, const TopologyPtr& topo, const SimilarityConfig& cfg,
                                      const EdgeMlp* mlp) {
    if (!s.all_finite()) throw InputError("similarity_scores: non-finite embedding");
    Tape t(false);
    Tensor out = edge_similarity(t, Tensor::constant(s), topo, cfg, mlp);
    return out.value().storage();
}

PrecisionTensors assemble_pairwise_normal(Tape& t, TopologyPtr topo, const Tensor& self_precision,
                                          const Tensor& coupling, double margin) {
    const auto& g = *topo;
    const std::size_t N = g.node_count(), E = g.edge_count();
    if (self_precision.rows() != N || self_precision.cols() != 1 || coupling.rows() != E || coupling.cols() != 1) {
        throw InputError("assemble_pairwise_normal: expected N x 1 self precision and E x 1 coupling");
    }
    if (!(margin > 1.0)) throw ConfigError("assemble_pairwise_normal: margin must exceed 1");
    const Matrix& p = self_precision.value();
    const Matrix& b = coupling.value();
    Matrix diag(N, 1, 0.0);
    std::vector<double> a_eff(E), c_eff(E);
    std::vector<char> scaled(E, 0);
    for (std::size_t e = 0; e < E; ++e) {
        const auto lo = static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)));
        const auto hi = static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)));
        const double a = p(lo, 0), c = p(hi, 0);
        if (!(a > 0.0) || !(c > 0.0)) throw DomainError("assemble_pairwise_normal: self precision must be positive");
        const double need = margin * b(e, 0) * b(e, 0);
        double tscale = 1.0;
        if (a * c < need) {
            tscale = std::sqrt(need / (a * c));
            scaled[e] = 1;
        }
        a_eff[e] = tscale * a;
        c_eff[e] = tscale * c;
        diag(lo, 0) += a_eff[e];
        diag(hi, 0) += c_eff[e];
    }
    for (std::size_t i = 0; i < N; ++i) {
        if (g.degree(static_cast<NodeId>(i)) == 0) diag(i, 0) = 1.0;
    }
    PrecisionTensors out;
    out.topology = topo;
    out.off = coupling;
    out.diag = make_result(t, std::move(diag), {&self_precision, &coupling}, "assemble_pairwise_normal");
    if (out.diag.requires_grad()) {
        t.record([pn = self_precision.node(), bn = coupling.node(), dn = out.diag.node(), topo,
                  a_eff = std::move(a_eff), c_eff = std::move(c_eff), scaled = std::move(scaled)] {
            if (dn->grad.empty()) return;
            const auto& g = *topo;
            const Matrix& gd = dn->grad;
            const Matrix& p = pn->value;
            const Matrix& b = bn->value;
            Matrix* gp = pn->requires_grad ? &pn->ensure_grad() : nullptr;
            Matrix* gb = bn->requires_grad ? &bn->ensure_grad() : nullptr;
            for (std::size_t e = 0; e < g.edge_count(); ++e) {
                const auto lo = static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)));
                const auto hi = static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)));
                const double glo = gd(lo, 0), ghi = gd(hi, 0);
                if (!scaled[e]) {
                    if (gp) {
                        (*gp)(lo, 0) += glo;
                        (*gp)(hi, 0) += ghi;
                    }
                    continue;
                }
                // a' = sqrt(m) |b| sqrt(p_lo / p_hi), c' = sqrt(m) |b| sqrt(p_hi / p_lo).
                if (gp) {
                    (*gp)(lo, 0) += (glo * a_eff[e] - ghi * c_eff[e]) / (2.0 * p(lo, 0));
                    (*gp)(hi, 0) += (ghi * c_eff[e] - glo * a_eff[e]) / (2.0 * p(hi, 0));
                }
                if (gb) (*gb)(e, 0) += (glo * a_eff[e] + ghi * c_eff[e]) / b(e, 0);
            }
        });
    }
    return out;
}

PrecisionTensors assemble_diag_dominant(Tape& t, TopologyPtr topo, const Tensor& coupling, const Tensor& confidence,
                                        double slack) {
    const auto& g = *topo;
    const std::size_t N = g.node_count(), E = g.edge_count();
    if (coupling.rows() != E || coupling.cols() != 1 || confidence.rows() != N || confidence.cols() != 1) {
        throw InputError("assemble_diag_dominant: expected E x 1 coupling and N x 1 confidence");
    }
    if (!(slack > 0.0)) throw ConfigError("assemble_diag_dominant: slack must be positive");
    Matrix diag(N, 1);
    for (std::size_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (const auto e : g.incident_edges(static_cast<NodeId>(i))) s += std::abs(coupling.value()(static_cast<std::size_t>(e), 0));
        diag(i, 0) = s + confidence.value()(i, 0) + slack;
    }
    PrecisionTensors out;
    out.topology = topo;
    out.off = coupling;
    out.diag = make_result(t, std::move(diag), {&coupling, &confidence}, "assemble_diag_dominant");
    if (out.diag.requires_grad()) {
        t.record([cn = coupling.node(), fn = confidence.node(), dn = out.diag.node(), topo] {
            if (dn->grad.empty()) return;
            const auto& g = *topo;
            const Matrix& gd = dn->grad;
            if (fn->requires_grad) {
                auto& gf = fn->ensure_grad();
                for (std::size_t i = 0; i < gf.rows(); ++i) gf(i, 0) += gd(i, 0);
            }
            if (cn->requires_grad) {
                auto& gc = cn->ensure_grad();
                for (std::size_t e = 0; e < g.edge_count(); ++e) {
                    const double v = cn->value(e, 0);
                    const double sgn = (v > 0.0) - (v < 0.0);
                    gc(e, 0) += sgn * (gd(static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e))), 0) +
                                       gd(static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e))), 0));
                }
            }
        });
    }
    return out;
}

PrecisionTensors assemble_laplacian(Tape& t, TopologyPtr topo, const Tensor& weights, const Tensor& bump,
                                    double epsilon_shift) {
    const auto& g = *topo;
    const std::size_t N = g.node_count(), E = g.edge_count();
    if (weights.rows() != E || weights.cols() != 1) throw InputError("assemble_laplacian: expected E x 1 weights");
    if (bump.defined() && (bump.rows() != N || bump.cols() != 1)) throw InputError("assemble_laplacian: expected N x 1 bump");
    if (!(epsilon_shift > 0.0 && epsilon_shift < 1.0)) throw ConfigError("assemble_laplacian: epsilon_shift must lie in (0, 1)");
    const double s = 2.0 + epsilon_shift;
    std::vector<double> deg(N, 0.0);
    for (std::size_t e = 0; e < E; ++e) {
        const double w = weights.value()(e, 0);
        if (w < 0.0) throw DomainError("assemble_laplacian: negative weight");
        deg[static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)))] += w;
        deg[static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)))] += w;
    }
    Matrix off(E, 1), diag(N, 1);
    for (std::size_t e = 0; e < E; ++e) {
        const double w = weights.value()(e, 0);
        const double dl = deg[static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)))];
        const double dh = deg[static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)))];
        off(e, 0) = (w > 0.0) ? -w / geometric_mean_sqrt(dl, dh) / s : 0.0;
    }
    for (std::size_t i = 0; i < N; ++i) {
        const double b = bump.defined() ? bump.value()(i, 0) : 0.0;
        if (b < 0.0) throw DomainError("assemble_laplacian: negative diagonal bump");
        diag(i, 0) = (1.0 + epsilon_shift + b) / s;
    }
    PrecisionTensors out;
    out.topology = topo;
    const Tensor none;
    out.off = make_result(t, std::move(off), {&weights}, "assemble_laplacian");
    if (out.off.requires_grad()) {
        t.record([wn = weights.node(), on = out.off.node(), topo, deg, s] {
            if (on->grad.empty()) return;
            const auto& g = *topo;
            const Matrix& go = on->grad;
            auto& gw = wn->ensure_grad();
            // d off_e / d deg_i = -off_e / (2 deg_i) for both endpoints i of e.
            std::vector<double> gdeg(g.node_count(), 0.0);
            for (std::size_t e = 0; e < g.edge_count(); ++e) {
                const double o = on->value(e, 0);
                if (o == 0.0) continue;
                const auto lo = static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)));
                const auto hi = static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)));
                gdeg[lo] += go(e, 0) * (-o / (2.0 * deg[lo]));
                gdeg[hi] += go(e, 0) * (-o / (2.0 * deg[hi]));
            }
            for (std::size_t e = 0; e < g.edge_count(); ++e) {
                const auto lo = static_cast<std::size_t>(g.lo(static_cast<EdgeId>(e)));
                const auto hi = static_cast<std::size_t>(g.hi(static_cast<EdgeId>(e)));
                double direct = 0.0;
                if (deg[lo] > 0.0 && deg[hi] > 0.0) direct = -1.0 / (s * geometric_mean_sqrt(deg[lo], deg[hi]));
                gw(e, 0) += go(e, 0) * direct + gdeg[lo] + gdeg[hi];
            }
        });
    }
    if (bump.defined()) {
        out.diag = make_result(t, std::move(diag), {&bump}, "assemble_laplacian");
        if (out.diag.requires_grad()) {
            t.record([bn = bump.node(), dn = out.diag.node(), s] {
                if (dn->grad.empty()) return;
                auto& gb = bn->ensure_grad();
                for (std::size_t i = 0; i < gb.rows(); ++i) gb(i, 0) += dn->grad(i, 0) / s;
            });
        }
    } else {
        out.diag = Tensor::constant(std::move(diag));
    }
    return out;
}

std::vector<Tensor> LearnedPrecisionParams::tensors() const {
    std::vector<Tensor> v{w_sim, node_w, node_b};
    if (mlp) {
        v.push_back(mlp->w1);
        v.push_back(mlp->b1);
        v.push_back(mlp->w2);
        v.push_back(mlp->b2);
    }
    return v;
}

LearnedPrecisionParams init_learned_params(const SimilarityConfig& sim, std::size_t d_model, std::size_t d_sim,
                                           Rng& rng, const std::string& prefix) {
    LearnedPrecisionParams p;
    p.w_sim = Tensor::parameter(init_weight(d_model, d_sim, rng), prefix + ".w_sim");
    p.node_w = Tensor::parameter(init_weight(d_model, 1, rng), prefix + ".node_w");
    p.node_b = Tensor::parameter(Matrix(1, 1), prefix + ".node_b");
    if (sim.kind == SimilarityKind::mlp) p.mlp = init_edge_mlp(d_sim, sim.mlp_hidden, rng, prefix);
    return p;
}

PrecisionTensors build_learned_tensors(Tape& t, Construction c, const Tensor& x, TopologyPtr topo,
                                       const LearnedPrecisionParams& p, const SimilarityConfig& sim,
                                       const BuildOptions& opt) {
    if (x.rows() != topo->node_count()) throw ConfigError("build_learned: feature rows do not match topology");
    if (p.w_sim.rows() != x.cols() || p.node_w.rows() != x.cols()) {
        throw ConfigError("build_learned: parameter shapes do not match feature width " + std::to_string(x.cols()));
    }
    if (c == Construction::laplacian && sim.kind != SimilarityKind::gaussian_kernel) {
        throw ConfigError("build_learned: the Laplacian construction needs nonnegative gaussian_kernel weights");
    }
    if (sim.kind == SimilarityKind::mlp && !p.mlp) throw ConfigError("build_learned: mlp similarity without parameters");

    Tensor s = leaky_relu(t, matmul(t, x, p.w_sim));
    Tensor scores = edge_similarity(t, s, topo, sim, p.mlp ? &*p.mlp : nullptr);
    Tensor node = softplus(t, add_bias(t, matmul(t, x, p.node_w), p.node_b));
    switch (c) {
        case Construction::pairwise_normal: return assemble_pairwise_normal(t, topo, node, scores, opt.margin);
        case Construction::diag_dominant: return assemble_diag_dominant(t, topo, scores, node, opt.slack);
        case Construction::laplacian:
            return assemble_laplacian(t, topo, scores, scale(t, node, opt.bump_scale), opt.laplacian_shift);
    }
    throw ConfigError("build_learned: unknown construction");
}

PrecisionBuild build_learned(Construction c, const Matrix& x, TopologyPtr topo, const LearnedPrecisionParams& p,
                             const SimilarityConfig& sim, const BuildOptions& opt) {
    if (!x.all_finite()) throw InputError("build_learned: non-finite features");
    Tape t(false);
    PrecisionTensors pt = build_learned_tensors(t, c, Tensor::constant(x), topo, p, sim, opt);
    PrecisionBuild out{pt.matrix(), c, true, {}};
    out.report = spectral_radius_abs_residual(out.J);
    return out;
}

PrecisionBuild build_fixed(Construction c, const Matrix& raw_features, TopologyPtr topo, const BuildOptions& opt) {
    if (raw_features.rows() != topo->node_count()) throw ConfigError("build_fixed: feature rows do not match topology");
    const std::size_t E = topo->edge_count();
    PrecisionBuild out;
    out.construction = c;
    out.learned = false;
    switch (c) {
        case Construction::pairwise_normal: {
            const auto b = similarity_scores(raw_features, topo, {SimilarityKind::cosine});
            const std::vector<double> ones(E, 1.0);
            out.J = build_pairwise_normal(topo, ones, b, ones, opt.margin);
            break;
        }
        case Construction::diag_dominant: {
            const auto b = similarity_scores(raw_features, topo, {SimilarityKind::cosine});
            const std::vector<double> zero(topo->node_count(), 0.0);
            out.J = build_diag_dominant(topo, b, zero, opt.slack);
            break;
        }
        case Construction::laplacian: {
            const std::vector<double> ones(E, 1.0);
            out.J = build_laplacian(topo, ones, opt.laplacian_shift);
            break;
        }
    }
    out.report = spectral_radius_abs_residual(out.J);
    return out;
}

}  // namespace tanet
