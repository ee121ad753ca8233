#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "tan/autograd.hpp"
#include "tan/fixed_point.hpp"
#include "tan/graph.hpp"
#include "tan/rng.hpp"
#include "tan/spectral.hpp"

namespace tanet {

enum class Construction { pairwise_normal, diag_dominant, laplacian };
enum class SimilarityKind { cosine, gaussian_kernel, mlp };

std::string_view to_string(Construction c);
Construction parse_construction(std::string_view name);  // throws ConfigError
std::string_view to_string(SimilarityKind k);
SimilarityKind parse_similarity(std::string_view name);

struct SimilarityConfig {
    SimilarityKind kind = SimilarityKind::cosine;
    double bandwidth = 1.0;  // gaussian kernel
    bool symmetrize = true;  // forced on for mlp
    std::size_t mlp_hidden = 16;
};

// Cosine couplings for the pairwise-normal and diagonally-dominant designs,
// a Gaussian kernel for the Laplacian design.
SimilarityConfig default_similarity(Construction c);

struct BuildOptions {
    double margin = 1.1;           // pairwise normal: a*c >= margin * b^2
    double slack = 0.1;            // diagonal dominance gap
    double laplacian_shift = 0.02; // epsilon in (L + eps I) / (2 + eps)
    double bump_scale = 0.1;       // learned Laplacian diagonal bump multiplier
};

// --- fixed builders ---------------------------------------------------------

// J_ij = b_ij, J_ii = sum of node i's own-side self precision over incident
// edges (a_e for the lower endpoint, c_e for the higher), 1 for isolated
// nodes. Couplings violating a*c >= margin*b^2 are clamped to
// sign(b) * sqrt(a*c/margin).
SparseSymmetricMatrix build_pairwise_normal(TopologyPtr topo, std::span<const double> a, std::span<const double> b,
                                            std::span<const double> c, double margin = 1.1);

// J_ij = coupling, J_ii = sum_j |J_ij| + self_confidence_i + slack.
SparseSymmetricMatrix build_diag_dominant(TopologyPtr topo, std::span<const double> couplings,
                                          std::span<const double> self_confidence, double slack = 0.1);

// J = (I - D^{-1/2} A D^{-1/2} + eps I + diag(bump)) / (2 + eps). Zero-degree
// nodes keep an identity Laplacian row.
SparseSymmetricMatrix build_laplacian(TopologyPtr topo, std::span<const double> weights, double epsilon_shift = 0.02,
                                      std::span<const double> diagonal_bump = {});

// --- similarity -------------------------------------------------------------

// Scalar head on [s_i, s_j]: leaky_relu([s_i s_j] w1 + b1) w2 + b2.
struct EdgeMlp {
    Tensor w1, b1, w2, b2;
};

EdgeMlp init_edge_mlp(std::size_t d_sim, std::size_t hidden, Rng& rng, const std::string& prefix);

Tensor edge_cosine(Tape& t, const Tensor& s, const TopologyPtr& topo);
Tensor edge_gaussian_kernel(Tape& t, const Tensor& s, const TopologyPtr& topo, double bandwidth);
// Row e is [s_lo(e), s_hi(e)], or [s_hi(e), s_lo(e)] when reversed.
Tensor edge_concat(Tape& t, const Tensor& s, const TopologyPtr& topo, bool reversed);
Tensor edge_similarity(Tape& t, const Tensor& s, const TopologyPtr& topo, const SimilarityConfig& cfg,
                       const EdgeMlp* mlp);

std::vector<double> similarity_scores(const Matrix& s, const TopologyPtr& topo, const SimilarityConfig& cfg,
                                      const EdgeMlp* mlp = nullptr);

// --- differentiable assembly ------------------------------------------------

// self_precision is N x 1 and positive; coupling is E x 1. Each edge takes
// a = sp[lo], c = sp[hi], scaled by t = max(1, sqrt(margin b^2 / (a c))).
PrecisionTensors assemble_pairwise_normal(Tape& t, TopologyPtr topo, const Tensor& self_precision,
                                          const Tensor& coupling, double margin);
PrecisionTensors assemble_diag_dominant(Tape& t, TopologyPtr topo, const Tensor& coupling, const Tensor& confidence,
                                        double slack);
// weights E x 1 nonnegative; bump N x 1 nonnegative or undefined.
PrecisionTensors assemble_laplacian(Tape& t, TopologyPtr topo, const Tensor& weights, const Tensor& bump,
                                    double epsilon_shift);

// --- learned and fixed builds -----------------------------------------------

struct LearnedPrecisionParams {
    Tensor w_sim;   // d_model x d_sim
    Tensor node_w;  // d_model x 1: self precision / confidence / bump head
    Tensor node_b;  // 1 x 1
    std::optional<EdgeMlp> mlp;

    std::vector<Tensor> tensors() const;
};

LearnedPrecisionParams init_learned_params(const SimilarityConfig& sim, std::size_t d_model, std::size_t d_sim,
                                           Rng& rng, const std::string& prefix);

PrecisionTensors build_learned_tensors(Tape& t, Construction c, const Tensor& x, TopologyPtr topo,
                                       const LearnedPrecisionParams& p, const SimilarityConfig& sim,
                                       const BuildOptions& opt = {});

struct PrecisionBuild {
    SparseSymmetricMatrix J;
    Construction construction = Construction::diag_dominant;
    bool learned = false;
    WalkSummabilityReport report;
};

PrecisionBuild build_learned(Construction c, const Matrix& x, TopologyPtr topo, const LearnedPrecisionParams& p,
                             const SimilarityConfig& sim, const BuildOptions& opt = {});

// Parameter-free variants: pairwise normal with a = c = 1 and cosine(raw
// features) couplings, diagonally dominant with cosine couplings and zero
// confidence, Laplacian on the binary adjacency.
PrecisionBuild build_fixed(Construction c, const Matrix& raw_features, TopologyPtr topo, const BuildOptions& opt = {});

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight.
Matrix init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace tanet
