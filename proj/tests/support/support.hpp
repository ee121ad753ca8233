#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "tan/dataset.hpp"
#include "tan/verify.hpp"

namespace tanet::testing {

Eigen::MatrixXd to_eigen(const Matrix& m);
Eigen::MatrixXd dense(const SparseSymmetricMatrix& J);
Matrix from_eigen(const Eigen::MatrixXd& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

SparseSymmetricMatrix from_dense(const Eigen::MatrixXd& J);  // off-diagonal support = nonzeros

// Labels drawn uniformly; same-label edges kept always, mixed edges with
// probability 1 - homophily_bias. Binary features correlated with the label.
Dataset synthetic_dataset(std::size_t n, std::size_t d_in, std::size_t classes, double homophily_bias,
                          std::uint64_t seed);
// 10-node, 2-class path with separable one-hot features.
Dataset toy_dataset();

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& leaf = "") const { return (leaf.empty() ? path_ : path_ / leaf).string(); }

private:
    std::filesystem::path path_;
};

void write_text(const std::filesystem::path& p, const std::string& text);
std::string read_text(const std::filesystem::path& p);

}  // namespace tanet::testing

namespace tanet::testing {

// Forward-mode dual number: value and one tangent.
struct Dual {
    double v = 0.0, d = 0.0;
};
inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }

// Gradients of loss = sum(W .* mu) with mu from explicitly unrolled,
// undamped GaBP (per-pair exclude-one sums, `iterations` sweeps), obtained
// by one dual-number pass per parameter.
struct UnrolledGradient {
    std::vector<double> diag;  // dL/dJ_ii
    std::vector<double> off;   // dL/dJ_e
    Matrix h;                  // dL/dh
};
UnrolledGradient unrolled_gabp_gradient(const SparseSymmetricMatrix& J, const Matrix& h, const Matrix& W,
                                        int iterations);

}  // namespace tanet::testing
