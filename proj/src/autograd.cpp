#include "tan/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "tan/errors.hpp"
#include "tan/rng.hpp"

namespace tanet {

Matrix& TensorNode::ensure_grad() {
    if (grad.empty() && !value.empty()) grad = Matrix(value.rows(), value.cols());
    return grad;
}

Tensor Tensor::constant(Matrix value) {
    auto n = std::make_shared<TensorNode>();
    n->value = std::move(value);
    return Tensor(std::move(n));
}

Tensor Tensor::parameter(Matrix value, std::string name) {
    auto n = std::make_shared<TensorNode>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->name = std::move(name);
    return Tensor(std::move(n));
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(0.0);
}

double Tensor::item() const {
    if (rows() != 1 || cols() != 1) throw InputError("Tensor::item: tensor is not 1x1");
    return node_->value(0, 0);
}

void Tape::record(std::function<void()> backward_fn) {
    if (consumed_) throw TapeError("Tape::record: tape already consumed by backward");
    if (recording_) ops_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw TapeError("Tape::backward: called twice without re-recording");
    if (!recording_) throw TapeError("Tape::backward: tape was not recording");
    if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
        throw TapeError("Tape::backward: loss must be a 1x1 tensor");
    }
    consumed_ = true;
    if (!loss.requires_grad()) return;
    loss.node()->ensure_grad()(0, 0) += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
}

Tensor make_result(Tape& tape, Matrix value, std::initializer_list<const Tensor*> inputs, const char* op) {
    if (!value.all_finite()) throw DomainError(std::string(op) + ": non-finite value in forward output");
    bool rg = false;
    if (tape.recording()) {
        for (const auto* in : inputs) rg = rg || in->requires_grad();
    }
    auto node = std::make_shared<TensorNode>();
    node->value = std::move(value);
    node->requires_grad = rg;
    return Tensor(std::move(node));
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.value().same_shape(b.value())) {
        throw InputError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

// out += a * b^T-style helpers written out for the three matmul products.
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double* o = out.data().data() + i * m;
        const double* ai = a.data().data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b.data().data() + p * m;
            for (std::size_t j = 0; j < m; ++j) o[j] += av * bp[j];
        }
    }
}

}  // namespace

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw InputError("matmul: inner dimensions differ (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
    }
    Matrix v(a.rows(), b.cols());
    gemm_nn(a.value(), b.value(), v);
    Tensor out = make_result(t, std::move(v), {&a, &b}, "matmul");
    if (out.requires_grad()) {
        t.record([an = a.node(), bn = b.node(), on = out.node()] {
            const Matrix& g = on->grad;
            if (g.empty()) return;
            const std::size_t n = an->value.rows(), k = an->value.cols(), m = bn->value.cols();
            if (an->requires_grad) {
                Matrix& ga = an->ensure_grad();  // g * b^T
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < m; ++j) s += g(i, j) * bn->value(p, j);
                        ga(i, p) += s;
                    }
            }
            if (bn->requires_grad) {
                Matrix& gb = bn->ensure_grad();  // a^T * g
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = an->value(i, p);
                        if (av == 0.0) continue;
                        for (std::size_t j = 0; j < m; ++j) gb(p, j) += av * g(i, j);
                    }
            }
        });
    }
    return out;
}

Tensor add(Tape& t, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Matrix v = a.value();
    for (std::size_t k = 0; k < v.size(); ++k) v.data()[k] += b.value().data()[k];
    Tensor out = make_result(t, std::move(v), {&a, &b}, "add");
    if (out.requires_grad()) {
        t.record([an = a.node(), bn = b.node(), on = out.node()] {
            if (on->grad.empty()) return;
            for (auto* n : {an.get(), bn.get()}) {
                if (!n->requires_grad) continue;
                auto& g = n->ensure_grad();
                for (std::size_t k = 0; k < g.size(); ++k) g.data()[k] += on->grad.data()[k];
            }
        });
    }
    return out;
}

Tensor add_bias(Tape& t, const Tensor& x, const Tensor& bias) {
    if (bias.rows() != 1 || bias.cols() != x.cols()) throw InputError("add_bias: bias must be 1 x cols(x)");
    Matrix v = x.value();
    for (std::size_t r = 0; r < v.rows(); ++r)
        for (std::size_t c = 0; c < v.cols(); ++c) v(r, c) += bias.value()(0, c);
    Tensor out = make_result(t, std::move(v), {&x, &bias}, "add_bias");
    if (out.requires_grad()) {
        t.record([xn = x.node(), bn = bias.node(), on = out.node()] {
            const Matrix& g = on->grad;
            if (g.empty()) return;
            if (xn->requires_grad) {
                auto& gx = xn->ensure_grad();
                for (std::size_t k = 0; k < gx.size(); ++k) gx.data()[k] += g.data()[k];
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
            }
        });
    }
    return out;
}

namespace {

// Elementwise op with derivative computed from (input, output) values.
template <class F, class DF>
Tensor unary(Tape& t, const Tensor& x, const char* op, F f, DF df) {
    Matrix v(x.rows(), x.cols());
    for (std::size_t k = 0; k < v.size(); ++k) v.data()[k] = f(x.value().data()[k]);
    Tensor out = make_result(t, std::move(v), {&x}, op);
    if (out.requires_grad()) {
        t.record([xn = x.node(), on = out.node(), df] {
            if (on->grad.empty()) return;
            auto& gx = xn->ensure_grad();
            for (std::size_t k = 0; k < gx.size(); ++k)
                gx.data()[k] += on->grad.data()[k] * df(xn->value.data()[k], on->value.data()[k]);
        });
    }
    return out;
}

}  // namespace

Tensor scale(Tape& t, const Tensor& x, double c) {
    return unary(t, x, "scale", [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor add_scalar(Tape& t, const Tensor& x, double c) {
    return unary(t, x, "add_scalar", [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor leaky_relu(Tape& t, const Tensor& x, double slope) {
    return unary(
        t, x, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor softplus(Tape& t, const Tensor& x) {
    return unary(
        t, x, "softplus", [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
        [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor layer_norm(Tape& t, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t n = x.rows(), d = x.cols();
    if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
        throw InputError("layer_norm: gain and bias must be 1 x " + std::to_string(d));
    }
    Matrix xhat(n, d), v(n, d);
    std::vector<double> inv_std(n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = x.value().row(r);
        double mean = 0.0;
        for (double a : row) mean += a;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double a : row) var += (a - mean) * (a - mean);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < d; ++c) {
            xhat(r, c) = (row[c] - mean) * inv_std[r];
            v(r, c) = xhat(r, c) * gain.value()(0, c) + bias.value()(0, c);
        }
    }
    Tensor out = make_result(t, std::move(v), {&x, &gain, &bias}, "layer_norm");
    if (out.requires_grad()) {
        t.record([xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node(), xhat = std::move(xhat),
                  inv_std = std::move(inv_std)] {
            const Matrix& g = on->grad;
            if (g.empty()) return;
            const std::size_t n = g.rows(), d = g.cols();
            if (gn->requires_grad) {
                auto& gg = gn->ensure_grad();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < d; ++c) gg(0, c) += g(r, c) * xhat(r, c);
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < d; ++c) gb(0, c) += g(r, c);
            }
            if (xn->requires_grad) {
                auto& gx = xn->ensure_grad();
                std::vector<double> dxhat(d);
                for (std::size_t r = 0; r < n; ++r) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        dxhat[c] = g(r, c) * gn->value(0, c);
                        m1 += dxhat[c];
                        m2 += dxhat[c] * xhat(r, c);
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    for (std::size_t c = 0; c < d; ++c) gx(r, c) += inv_std[r] * (dxhat[c] - m1 - xhat(r, c) * m2);
                }
            }
        });
    }
    return out;
}

double dropout_uniform(const DropoutKey& key, std::uint64_t index) {
    std::uint64_t h = splitmix64(key.seed ^ 0x9e3779b97f4a7c15ULL);
    h = splitmix64(h ^ key.epoch);
    h = splitmix64(h ^ key.instance);
    h = splitmix64(h ^ index);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

Tensor dropout(Tape& t, const Tensor& x, double rate, bool train, const DropoutKey& key) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must lie in [0, 1)");
    if (!train || rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.value().size());
    Matrix v(x.rows(), x.cols());
    for (std::size_t k = 0; k < mask.size(); ++k) {
        mask[k] = dropout_uniform(key, k) < rate ? 0.0 : keep_scale;
        v.data()[k] = x.value().data()[k] * mask[k];
    }
    Tensor out = make_result(t, std::move(v), {&x}, "dropout");
    if (out.requires_grad()) {
        t.record([xn = x.node(), on = out.node(), mask = std::move(mask)] {
            if (on->grad.empty()) return;
            auto& gx = xn->ensure_grad();
            for (std::size_t k = 0; k < mask.size(); ++k) gx.data()[k] += on->grad.data()[k] * mask[k];
        });
    }
    return out;
}

Tensor concat_columns(Tape& t, std::span<const Tensor> parts) {
    if (parts.empty()) throw InputError("concat_columns: no inputs");
    const std::size_t n = parts.front().rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rows() != n) throw InputError("concat_columns: row counts differ");
        total += p.cols();
    }
    Matrix v(n, total);
    std::size_t off = 0;
    bool rg = false;
    for (const auto& p : parts) {
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < p.cols(); ++c) v(r, off + c) = p.value()(r, c);
        off += p.cols();
        rg = rg || p.requires_grad();
    }
    Tensor out = make_result(t, std::move(v), {}, "concat_columns");
    out.node()->requires_grad = rg && t.recording();
    if (out.requires_grad()) {
        std::vector<std::shared_ptr<TensorNode>> nodes;
        for (const auto& p : parts) nodes.push_back(p.node());
        t.record([nodes = std::move(nodes), on = out.node()] {
            const Matrix& g = on->grad;
            if (g.empty()) return;
            std::size_t off = 0;
            for (const auto& pn : nodes) {
                const std::size_t w = pn->value.cols();
                if (pn->requires_grad) {
                    auto& gp = pn->ensure_grad();
                    for (std::size_t r = 0; r < g.rows(); ++r)
                        for (std::size_t c = 0; c < w; ++c) gp(r, c) += g(r, off + c);
                }
                off += w;
            }
        });
    }
    return out;
}

std::vector<Tensor> split_columns(Tape& t, const Tensor& x, std::span<const std::size_t> widths) {
    std::size_t total = 0;
    for (auto w : widths) total += w;
    if (total != x.cols()) throw InputError("split_columns: widths do not sum to cols(x)");
    std::vector<Tensor> outs;
    std::size_t off = 0;
    for (const auto w : widths) {
        Matrix v(x.rows(), w);
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < w; ++c) v(r, c) = x.value()(r, off + c);
        Tensor out = make_result(t, std::move(v), {&x}, "split_columns");
        if (out.requires_grad()) {
            t.record([xn = x.node(), on = out.node(), off, w] {
                if (on->grad.empty()) return;
                auto& gx = xn->ensure_grad();
                for (std::size_t r = 0; r < gx.rows(); ++r)
                    for (std::size_t c = 0; c < w; ++c) gx(r, off + c) += on->grad(r, c);
            });
        }
        outs.push_back(std::move(out));
        off += w;
    }
    return outs;
}

Tensor sum(Tape& t, const Tensor& x) {
    double s = 0.0;
    for (double v : x.value().data()) s += v;
    Tensor out = make_result(t, Matrix(1, 1, s), {&x}, "sum");
    if (out.requires_grad()) {
        t.record([xn = x.node(), on = out.node()] {
            if (on->grad.empty()) return;
            const double g = on->grad(0, 0);
            for (auto& v : xn->ensure_grad().data()) v += g;
        });
    }
    return out;
}

Tensor weighted_sum(Tape& t, const Tensor& x, const Matrix& w) {
    if (!w.same_shape(x.value())) throw InputError("weighted_sum: weight shape differs from input");
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += w.data()[k] * x.value().data()[k];
    Tensor out = make_result(t, Matrix(1, 1, s), {&x}, "weighted_sum");
    if (out.requires_grad()) {
        t.record([xn = x.node(), on = out.node(), w] {
            if (on->grad.empty()) return;
            const double g = on->grad(0, 0);
            auto& gx = xn->ensure_grad();
            for (std::size_t k = 0; k < w.size(); ++k) gx.data()[k] += g * w.data()[k];
        });
    }
    return out;
}

Tensor row_softmax_cross_entropy(Tape& t, const Tensor& logits, std::span<const int> labels,
                                 std::span<const std::int32_t> rows) {
    const std::size_t n = logits.rows(), k = logits.cols();
    if (labels.size() != n) throw InputError("row_softmax_cross_entropy: one label per row required");
    if (rows.empty()) throw InputError("row_softmax_cross_entropy: empty mask");
    Matrix prob(rows.size(), k);
    double loss = 0.0;
    for (std::size_t q = 0; q < rows.size(); ++q) {
        const auto r = static_cast<std::size_t>(rows[q]);
        if (r >= n) throw InputError("row_softmax_cross_entropy: mask row out of range");
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= k) throw InputError("row_softmax_cross_entropy: label out of range");
        const auto z = logits.value().row(r);
        const double zmax = *std::max_element(z.begin(), z.end());
        double den = 0.0;
        for (std::size_t c = 0; c < k; ++c) den += std::exp(z[c] - zmax);
        for (std::size_t c = 0; c < k; ++c) prob(q, c) = std::exp(z[c] - zmax) / den;
        loss += -(z[static_cast<std::size_t>(y)] - zmax - std::log(den));
    }
    loss /= static_cast<double>(rows.size());
    Tensor out = make_result(t, Matrix(1, 1, loss), {&logits}, "row_softmax_cross_entropy");
    if (out.requires_grad()) {
        std::vector<std::int32_t> rv(rows.begin(), rows.end());
        std::vector<int> lv(labels.begin(), labels.end());
        t.record([ln = logits.node(), on = out.node(), prob = std::move(prob), rv = std::move(rv), lv = std::move(lv)] {
            if (on->grad.empty()) return;
            const double g = on->grad(0, 0) / static_cast<double>(rv.size());
            auto& gl = ln->ensure_grad();
            for (std::size_t q = 0; q < rv.size(); ++q) {
                const auto r = static_cast<std::size_t>(rv[q]);
                for (std::size_t c = 0; c < prob.cols(); ++c) {
                    const double onehot = (static_cast<int>(c) == lv[r]) ? 1.0 : 0.0;
                    gl(r, c) += g * (prob(q, c) - onehot);
                }
            }
        });
    }
    return out;
}

}  // namespace tanet
