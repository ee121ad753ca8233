#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tan/graph.hpp"
#include "tan/matrix.hpp"

namespace tanet {

struct Dataset {
    std::string name;
    std::size_t num_classes = 0;
    std::array<double, 3> split_ratios{0.0, 0.0, 0.0};  // train, val, test
    TopologyPtr topology;
    Matrix features;  // node x d_in
    std::vector<int> labels;

    std::size_t node_count() const { return labels.size(); }
    std::size_t feature_dim() const { return features.cols(); }
    void validate() const;  // throws InputError
};

// Reads meta.json, edges.tsv, features.tsv and labels.tsv from dir. Self
// loops are dropped, edges canonicalized, feature rows L1-normalized.
Dataset load_dataset(const std::string& dir);
// Writes the same layout. Features are written as stored (already normalized).
void save_dataset(const Dataset& ds, const std::string& dir);

void l1_normalize_rows(Matrix& x);

enum class Split : std::uint8_t { train, val, test };

// Per-node split assignment. The test rows are only reachable through
// test_rows(), which counts its calls.
class SplitMask {
public:
    SplitMask() = default;
    SplitMask(std::vector<Split> assignment, std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t size() const noexcept { return assignment_.size(); }
    Split at(std::size_t node) const { return assignment_.at(node); }
    const std::vector<std::int32_t>& train_rows() const noexcept { return train_; }
    const std::vector<std::int32_t>& val_rows() const noexcept { return val_; }
    const std::vector<std::int32_t>& test_rows() const;
    std::size_t test_count() const noexcept { return test_.size(); }
    std::size_t test_accesses() const noexcept { return test_accesses_; }

private:
    std::vector<Split> assignment_;
    std::uint64_t seed_ = 0;
    std::vector<std::int32_t> train_, val_, test_;
    mutable std::size_t test_accesses_ = 0;
};

// Seeded uniform permutation sliced by the dataset ratios (no
// stratification). Train and val sizes are rounded, test takes the rest.
SplitMask random_split(const Dataset& ds, std::uint64_t seed);
SplitMask random_split(std::size_t node_count, const std::array<double, 3>& ratios, std::uint64_t seed);

// Fraction of undirected edges joining same-label endpoints.
double edge_homophily(const Dataset& ds);
double edge_homophily(const GraphTopology& g, const std::vector<int>& labels);

}  // namespace tanet
