#include "tan/model.hpp"

#include <map>

#include "tan/errors.hpp"

namespace tanet {

void LayerConfig::validate() const {
    if (heads.empty()) throw ConfigError("LayerConfig: at least one head required");
    std::size_t total = 0;
    for (const auto& h : heads) {
        if (h.d_latent < 1) throw ConfigError("LayerConfig: d_latent must be >= 1");
        total += h.d_latent;
    }
    if (total != d_model) {
        throw ConfigError("LayerConfig: head widths sum to " + std::to_string(total) + ", d_model is " +
                          std::to_string(d_model));
    }
    if (!(dropout >= 0.0 && dropout < 1.0) || !(ffn_dropout >= 0.0 && ffn_dropout < 1.0)) {
        throw ConfigError("LayerConfig: dropout must lie in [0, 1)");
    }
}

void ModelConfig::validate() const {
    if (d_in == 0 || num_classes == 0 || d_model == 0) throw ConfigError("ModelConfig: zero-sized dimension");
    if (layers.empty()) throw ConfigError("ModelConfig: at least one layer required");
    for (const auto& l : layers) {
        l.validate();
        if (l.d_model != d_model) throw ConfigError("ModelConfig: layer width differs from d_model");
    }
    if (!(input_dropout >= 0.0 && input_dropout < 1.0)) throw ConfigError("ModelConfig: dropout must lie in [0, 1)");
    solver.validate();
}

ModelConfig make_reference_config(std::size_t d_in, std::size_t num_classes, Construction c, bool learned,
                                  double dropout, const SolverConfig& solver) {
    ModelConfig m;
    m.d_in = d_in;
    m.num_classes = num_classes;
    m.d_model = 64;
    m.input_dropout = dropout;
    m.solver = solver;
    HeadConfig head;
    head.construction = c;
    head.learned = learned;
    head.similarity = default_similarity(c);
    LayerConfig l1;
    l1.d_model = 64;
    l1.dropout = dropout;
    head.d_latent = 8;
    l1.heads.assign(8, head);
    LayerConfig l2 = l1;
    head.d_latent = 64;
    l2.heads.assign(1, head);
    m.layers = {l1, l2};
    return m;
}

LayerParams init_layer_params(const LayerConfig& cfg, Rng& rng, const std::string& prefix) {
    const std::size_t d = cfg.d_model;
    LayerParams p;
    p.ln1_gain = Tensor::parameter(Matrix(1, d, 1.0), prefix + ".ln1.gain");
    p.ln1_bias = Tensor::parameter(Matrix(1, d), prefix + ".ln1.bias");
    for (std::size_t k = 0; k < cfg.heads.size(); ++k) {
        const auto& hc = cfg.heads[k];
        const std::string hp = prefix + ".head" + std::to_string(k);
        HeadParams h;
        h.w_obs = Tensor::parameter(init_weight(d, hc.d_latent, rng), hp + ".w_obs");
        if (hc.learned) h.precision = init_learned_params(hc.similarity, d, hc.d_latent, rng, hp);
        h.ln_gain = Tensor::parameter(Matrix(1, hc.d_latent, 1.0), hp + ".ln.gain");
        h.ln_bias = Tensor::parameter(Matrix(1, hc.d_latent), hp + ".ln.bias");
        p.heads.push_back(std::move(h));
    }
    p.w_proj = Tensor::parameter(init_weight(d, d, rng), prefix + ".w_proj");
    p.b_proj = Tensor::parameter(Matrix(1, d), prefix + ".b_proj");
    p.ln2_gain = Tensor::parameter(Matrix(1, d, 1.0), prefix + ".ln2.gain");
    p.ln2_bias = Tensor::parameter(Matrix(1, d), prefix + ".ln2.bias");
    p.ffn_w1 = Tensor::parameter(init_weight(d, cfg.ffn_hidden, rng), prefix + ".ffn.w1");
    p.ffn_b1 = Tensor::parameter(Matrix(1, cfg.ffn_hidden), prefix + ".ffn.b1");
    p.ffn_w2 = Tensor::parameter(init_weight(cfg.ffn_hidden, d, rng), prefix + ".ffn.w2");
    p.ffn_b2 = Tensor::parameter(Matrix(1, d), prefix + ".ffn.b2");
    return p;
}

Tensor gabp_block(Tape& t, const Tensor& x, const LayerConfig& cfg, const LayerParams& p, const TopologyPtr& topo,
                  const SolverConfig& solver, const BlockContext& ctx) {
    if (x.cols() != cfg.d_model || x.rows() != topo->node_count()) {
        throw InputError("gabp_block: expected " + std::to_string(topo->node_count()) + " x " +
                         std::to_string(cfg.d_model) + " input");
    }
    Tensor z = layer_norm(t, x, p.ln1_gain, p.ln1_bias);
    std::vector<Tensor> parts;
    parts.reserve(cfg.heads.size());
    for (std::size_t k = 0; k < cfg.heads.size(); ++k) {
        const auto& hc = cfg.heads[k];
        const auto& hp = p.heads[k];
        try {
            Tensor h = leaky_relu(t, matmul(t, z, hp.w_obs));
            PrecisionTensors J;
            if (hc.learned) {
                J = build_learned_tensors(t, hc.construction, z, topo, *hp.precision, hc.similarity, ctx.build);
            } else {
                if (!ctx.fixed_precision) throw ConfigError("gabp_block: fixed head without a fixed precision matrix");
                J.topology = topo;
                J.diag = Tensor::constant(Matrix(topo->node_count(), 1, ctx.fixed_precision->diagonal));
                J.off = Tensor::constant(Matrix(topo->edge_count(), 1, ctx.fixed_precision->off_diagonal));
            }
            if (ctx.captured && ctx.capture_head && *ctx.capture_head == k) *ctx.captured = J.matrix();
            auto stats = std::make_shared<FixedPointStats>();
            Tensor mu = gabp_fixed_point(t, J, h, solver, stats);
            if (ctx.solves) ctx.solves->push_back({ctx.layer_index, k, stats});
            parts.push_back(leaky_relu(t, layer_norm(t, mu, hp.ln_gain, hp.ln_bias)));
        } catch (const NumericBreakdown&) {
            throw;
        } catch (const Error& e) {
            throw Error("layer " + std::to_string(ctx.layer_index) + " head " + std::to_string(k) + ": " + e.what());
        }
    }
    Tensor u = concat_columns(t, parts);
    return add(t, x, add_bias(t, matmul(t, u, p.w_proj), p.b_proj));
}

Tensor ffn_block(Tape& t, const Tensor& x, const LayerConfig& cfg, const LayerParams& p, bool train,
                 const DropoutKey& key) {
    if (x.cols() != cfg.d_model) throw InputError("ffn_block: expected width " + std::to_string(cfg.d_model));
    Tensor z = layer_norm(t, x, p.ln2_gain, p.ln2_bias);
    Tensor hidden = leaky_relu(t, add_bias(t, matmul(t, z, p.ffn_w1), p.ffn_b1));
    hidden = dropout(t, hidden, cfg.ffn_dropout, train, key);
    return add(t, x, add_bias(t, matmul(t, hidden, p.ffn_w2), p.ffn_b2));
}

TanModel::TanModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed ^ 0x7a4e'6d6f'6465'6c00ULL);
    w_in_ = Tensor::parameter(init_weight(cfg_.d_in, cfg_.d_model, rng), "input.w");
    b_in_ = Tensor::parameter(Matrix(1, cfg_.d_model), "input.b");
    for (std::size_t l = 0; l < cfg_.layers.size(); ++l) {
        layers_.push_back(init_layer_params(cfg_.layers[l], rng, "layer" + std::to_string(l)));
    }
    w_out_ = Tensor::parameter(init_weight(cfg_.d_model, cfg_.num_classes, rng), "output.w");
    b_out_ = Tensor::parameter(Matrix(1, cfg_.num_classes), "output.b");
}

bool TanModel::needs_fixed_precision() const {
    for (const auto& l : cfg_.layers)
        for (const auto& h : l.heads)
            if (!h.learned) return true;
    return false;
}

void TanModel::prepare_fixed_precision(const Matrix& raw_features, const TopologyPtr& topo) {
    if (!needs_fixed_precision()) return;
    std::optional<Construction> c;
    for (const auto& l : cfg_.layers)
        for (const auto& h : l.heads)
            if (!h.learned) {
                if (c && *c != h.construction) throw ConfigError("TanModel: fixed heads must share one construction");
                c = h.construction;
            }
    fixed_ = build_fixed(*c, raw_features, topo, cfg_.build).J;
}

Tensor TanModel::forward(Tape& t, const Matrix& x_raw, const TopologyPtr& topo, Mode mode,
                         const ForwardOptions& opt) const {
    if (x_raw.rows() != topo->node_count() || x_raw.cols() != cfg_.d_in) {
        throw InputError("TanModel::forward: expected " + std::to_string(topo->node_count()) + " x " +
                         std::to_string(cfg_.d_in) + " features");
    }
    if (needs_fixed_precision() && !fixed_) throw ConfigError("TanModel::forward: fixed precision not prepared");
    const bool train = mode == Mode::train;
    auto key = [&](std::uint64_t instance) { return DropoutKey{opt.seed, opt.epoch, instance}; };

    Tensor h = dropout(t, Tensor::constant(x_raw), cfg_.input_dropout, train, key(0));
    h = add_bias(t, matmul(t, h, w_in_), b_in_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& lc = cfg_.layers[l];
        if (l > 0) h = dropout(t, h, lc.dropout, train, key(2 * l + 1));
        BlockContext ctx;
        ctx.layer_index = l;
        ctx.fixed_precision = fixed_ ? &*fixed_ : nullptr;
        ctx.build = cfg_.build;
        ctx.solves = opt.solves;
        if (opt.capture && opt.capture->first == l) {
            ctx.capture_head = opt.capture->second;
            ctx.captured = opt.captured;
        }
        h = gabp_block(t, h, lc, layers_[l], topo, cfg_.solver, ctx);
        h = ffn_block(t, h, lc, layers_[l], train, key(2 * l + 2));
        if (opt.capture && opt.capture->first == l && !opt.solves) return h;
    }
    return add_bias(t, matmul(t, h, w_out_), b_out_);
}

SparseSymmetricMatrix TanModel::head_precision(const Matrix& x_raw, const TopologyPtr& topo, std::size_t layer,
                                               std::size_t head) const {
    if (layer >= layers_.size() || head >= cfg_.layers[layer].heads.size()) {
        throw InputError("head_precision: no head " + std::to_string(head) + " in layer " + std::to_string(layer));
    }
    Tape t(false);
    SparseSymmetricMatrix J;
    ForwardOptions opt;
    opt.capture = std::make_pair(layer, head);
    opt.captured = &J;
    forward(t, x_raw, topo, Mode::eval, opt);
    return J;
}

std::vector<Tensor> TanModel::parameters() const {
    std::vector<Tensor> v{w_in_, b_in_};
    for (const auto& l : layers_) {
        v.push_back(l.ln1_gain);
        v.push_back(l.ln1_bias);
        for (const auto& h : l.heads) {
            v.push_back(h.w_obs);
            if (h.precision)
                for (auto& p : h.precision->tensors()) v.push_back(p);
            v.push_back(h.ln_gain);
            v.push_back(h.ln_bias);
        }
        for (const auto* p : {&l.w_proj, &l.b_proj, &l.ln2_gain, &l.ln2_bias, &l.ffn_w1, &l.ffn_b1, &l.ffn_w2, &l.ffn_b2})
            v.push_back(*p);
    }
    v.push_back(w_out_);
    v.push_back(b_out_);
    return v;
}

std::vector<NamedMatrix> TanModel::state() const {
    std::vector<NamedMatrix> out;
    for (const auto& p : parameters()) out.push_back({p.name(), p.value()});
    return out;
}

void TanModel::load_state(const std::vector<NamedMatrix>& state) {
    std::map<std::string, const Matrix*> by_name;
    for (const auto& s : state) by_name[s.name] = &s.value;
    for (auto p : parameters()) {
        auto it = by_name.find(p.name());
        if (it == by_name.end()) throw InputError("load_state: missing tensor '" + p.name() + "'");
        if (!it->second->same_shape(p.value())) throw InputError("load_state: shape mismatch for '" + p.name() + "'");
        p.mutable_value() = *it->second;
    }
}

}  // namespace tanet
