#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tan/matrix.hpp"

namespace tanet {

struct TensorNode {
    Matrix value;
    Matrix grad;  // empty until something flows into it
    bool requires_grad = false;
    std::string name;

    Matrix& ensure_grad();
};

// Shared handle to a 2-D value with an optional gradient buffer.
class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Matrix value);
    static Tensor parameter(Matrix value, std::string name);

    bool defined() const noexcept { return static_cast<bool>(node_); }
    std::size_t rows() const { return node_->value.rows(); }
    std::size_t cols() const { return node_->value.cols(); }
    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad();
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::string& name() const { return node_->name; }

    double item() const;  // value of a 1x1 tensor

    const std::shared_ptr<TensorNode>& node() const noexcept { return node_; }
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<TensorNode> node_;
};

// Records backward closures in forward order and replays them once in
// reverse. A non-recording tape evaluates ops without keeping any closure.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const noexcept { return recording_; }
    std::size_t size() const noexcept { return ops_.size(); }

    void record(std::function<void()> backward_fn);

    // Seeds d loss = 1 and runs the tape. loss must be 1x1. Throws TapeError
    // when called a second time.
    void backward(const Tensor& loss);

private:
    bool recording_;
    bool consumed_ = false;
    std::vector<std::function<void()>> ops_;
};

// Builds the output tensor of an op. Checks finiteness of the forward value
// (throws DomainError naming op) and marks the result as requiring grad when
// the tape records and any input requires grad.
Tensor make_result(Tape& tape, Matrix value, std::initializer_list<const Tensor*> inputs, const char* op);

struct DropoutKey {
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;
    std::uint64_t instance = 0;
};

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b);
Tensor add(Tape& t, const Tensor& a, const Tensor& b);
Tensor add_bias(Tape& t, const Tensor& x, const Tensor& bias);  // bias is 1 x cols, added to every row
Tensor scale(Tape& t, const Tensor& x, double c);
Tensor add_scalar(Tape& t, const Tensor& x, double c);
Tensor leaky_relu(Tape& t, const Tensor& x, double slope = 0.01);
Tensor softplus(Tape& t, const Tensor& x);
Tensor layer_norm(Tape& t, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor dropout(Tape& t, const Tensor& x, double rate, bool train, const DropoutKey& key);
Tensor concat_columns(Tape& t, std::span<const Tensor> parts);
std::vector<Tensor> split_columns(Tape& t, const Tensor& x, std::span<const std::size_t> widths);
Tensor sum(Tape& t, const Tensor& x);                           // 1x1
Tensor weighted_sum(Tape& t, const Tensor& x, const Matrix& w);  // 1x1, sum of w .* x
// Mean over `rows` of -log softmax(logits[r])[labels[r]].
Tensor row_softmax_cross_entropy(Tape& t, const Tensor& logits, std::span<const int> labels,
                                 std::span<const std::int32_t> rows);

// Counter-based uniform in [0, 1) from (key, index).
double dropout_uniform(const DropoutKey& key, std::uint64_t index);

}  // namespace tanet
