#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "tan/autograd.hpp"
#include "tan/builders.hpp"
#include "tan/checkpoint.hpp"
#include "tan/fixed_point.hpp"
#include "tan/gabp.hpp"

namespace tanet {

enum class Mode { train, eval };

struct HeadConfig {
    std::size_t d_latent = 8;
    Construction construction = Construction::diag_dominant;
    bool learned = true;
    SimilarityConfig similarity = default_similarity(Construction::diag_dominant);
};

struct LayerConfig {
    std::size_t d_model = 64;
    std::vector<HeadConfig> heads;
    std::size_t ffn_hidden = 128;
    double dropout = 0.6;      // applied to the layer input (between layers)
    double ffn_dropout = 0.0;  // on the FFN hidden activation; off in the reference setup

    void validate() const;  // head widths must sum to d_model
};

struct ModelConfig {
    std::size_t d_in = 0;
    std::size_t num_classes = 0;
    std::size_t d_model = 64;
    double input_dropout = 0.6;
    std::vector<LayerConfig> layers;
    BuildOptions build;
    SolverConfig solver;

    void validate() const;
};

// Reference two-layer setup: d_model 64, first layer 8 heads of width 8,
// second layer one head of width 64, FFN width 128.
ModelConfig make_reference_config(std::size_t d_in, std::size_t num_classes, Construction c, bool learned,
                                  double dropout = 0.6, const SolverConfig& solver = {});

struct HeadParams {
    Tensor w_obs;  // d_model x d_latent
    std::optional<LearnedPrecisionParams> precision;
    Tensor ln_gain, ln_bias;  // post-GaBP normalization, 1 x d_latent
};

struct LayerParams {
    Tensor ln1_gain, ln1_bias;
    std::vector<HeadParams> heads;
    Tensor w_proj, b_proj;
    Tensor ln2_gain, ln2_bias;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

LayerParams init_layer_params(const LayerConfig& cfg, Rng& rng, const std::string& prefix);

struct SolveRecord {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::shared_ptr<FixedPointStats> stats;
};

struct BlockContext {
    std::size_t layer_index = 0;
    const SparseSymmetricMatrix* fixed_precision = nullptr;  // shared by all non-learned heads
    BuildOptions build;
    std::vector<SolveRecord>* solves = nullptr;
    // When set, the matrix used by (layer_index, capture_head) is copied here.
    std::optional<std::size_t> capture_head;
    SparseSymmetricMatrix* captured = nullptr;
};

// X + W_proj concat_k leaky_relu(LN_k(J_k^{-1} leaky_relu(LN1(X) W_obs_k))).
Tensor gabp_block(Tape& t, const Tensor& x, const LayerConfig& cfg, const LayerParams& p, const TopologyPtr& topo,
                  const SolverConfig& solver, const BlockContext& ctx);

// X + W2 leaky_relu(W1 LN(X)), node-wise.
Tensor ffn_block(Tape& t, const Tensor& x, const LayerConfig& cfg, const LayerParams& p, bool train,
                 const DropoutKey& key);

struct ForwardOptions {
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;
    std::vector<SolveRecord>* solves = nullptr;
    std::optional<std::pair<std::size_t, std::size_t>> capture;  // (layer, head)
    SparseSymmetricMatrix* captured = nullptr;
};

class TanModel {
public:
    TanModel(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return cfg_; }
    bool needs_fixed_precision() const;
    // Builds the shared fixed precision matrix from raw features.
    void prepare_fixed_precision(const Matrix& raw_features, const TopologyPtr& topo);
    void set_fixed_precision(SparseSymmetricMatrix J) { fixed_ = std::move(J); }
    const std::optional<SparseSymmetricMatrix>& fixed_precision() const noexcept { return fixed_; }

    // Logits for every node, N x num_classes.
    Tensor forward(Tape& t, const Matrix& x_raw, const TopologyPtr& topo, Mode mode,
                   const ForwardOptions& opt = {}) const;

    // Precision matrix of one head under eval-mode inputs.
    SparseSymmetricMatrix head_precision(const Matrix& x_raw, const TopologyPtr& topo, std::size_t layer,
                                         std::size_t head) const;

    std::vector<Tensor> parameters() const;
    std::vector<NamedMatrix> state() const;
    void load_state(const std::vector<NamedMatrix>& state);

    LayerParams& layer_params(std::size_t l) { return layers_.at(l); }
    const LayerParams& layer_params(std::size_t l) const { return layers_.at(l); }
    Tensor& input_weight() { return w_in_; }
    Tensor& output_weight() { return w_out_; }

private:
    ModelConfig cfg_;
    Tensor w_in_, b_in_;
    std::vector<LayerParams> layers_;
    Tensor w_out_, b_out_;
    std::optional<SparseSymmetricMatrix> fixed_;
};

// Functional entry point matching the reference network description.
inline Tensor forward_network(Tape& t, const Matrix& x_raw, const TanModel& model, const TopologyPtr& topo, Mode mode,
                              const ForwardOptions& opt = {}) {
    return model.forward(t, x_raw, topo, mode, opt);
}

}  // namespace tanet
