#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tan/checkpoint.hpp"
#include "tan/dataset.hpp"
#include "tan/model.hpp"

namespace tanet {

struct ExperimentConfig {
    std::string dataset;
    Construction construction = Construction::diag_dominant;
    bool learned = true;
    SimilarityKind similarity = SimilarityKind::cosine;
    std::vector<std::uint64_t> seeds{0};
    double learning_rate = 1e-3;
    double weight_decay = 5e-4;
    double dropout = 0.6;
    int patience = 100;
    int max_epochs = 2000;
    SolverConfig solver;
    std::size_t hidden = 64;
    std::size_t ffn_hidden = 128;
    std::vector<std::size_t> heads{8, 1};

    void validate() const;  // throws ConfigError
};

// Defaults for every missing key; patience defaults to 200 for the fixed
// Laplacian. Unknown keys are rejected.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

ModelConfig make_model_config(const ExperimentConfig& cfg, std::size_t d_in, std::size_t num_classes);

// --- optimizer ---------------------------------------------------------------

struct AdamState {
    std::vector<Matrix> m, v;
    std::int64_t step = 0;
};

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// Classic Adam with L2 decay folded into the gradient. A null gradient is
// treated as zero.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamState& state, double lr,
               double weight_decay);
void adam_step(std::span<const Tensor> params, AdamState& state, double lr, double weight_decay);

// --- runs --------------------------------------------------------------------

struct HeadTelemetry {
    std::size_t layer = 0;
    std::size_t head = 0;
    int fwd_iterations = 0;
    int bwd_iterations = 0;
    bool fwd_converged = false;
    bool bwd_converged = false;
    double fwd_residual = 0.0;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    double val_loss = 0.0;
    std::vector<HeadTelemetry> heads;

    double mean_fwd_iterations() const;
    double mean_bwd_iterations() const;
    double converged_fraction() const;
};

struct RunRecord {
    std::uint64_t seed = 0;
    bool failed = false;
    std::string failure;
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_val_acc = 0.0;
    double best_val_loss = 0.0;
    double test_acc = 0.0;
    double wall_seconds = 0.0;

    int epochs_run() const { return static_cast<int>(epochs.size()); }
    double mean_fwd_iterations() const;
    double mean_bwd_iterations() const;
    double converged_fraction() const;  // over forward solves
    std::size_t forward_solves() const;
    std::size_t forward_solves_within(int max_iterations) const;  // converged with iterations <= cap
};

double masked_accuracy(const Matrix& logits, std::span<const int> labels, std::span<const std::int32_t> rows);
double masked_cross_entropy(const Matrix& logits, std::span<const int> labels, std::span<const std::int32_t> rows);

// Trains on one split. The test rows are read once, after the best-val
// parameters are restored. best_state receives those parameters if given.
RunRecord train_once(const ExperimentConfig& cfg, const Dataset& ds, const SplitMask& split, std::uint64_t seed,
                     std::vector<NamedMatrix>* best_state = nullptr);
RunRecord train_once(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed,
                     std::vector<NamedMatrix>* best_state = nullptr);
RunRecord train_once(const ExperimentConfig& cfg, std::uint64_t seed);

struct ProtocolSummary {
    std::vector<RunRecord> runs;  // in seed order
    std::size_t successes = 0;
    std::size_t failures = 0;
    double mean_test_acc = 0.0;
    double std_test_acc = 0.0;  // sample standard deviation
    double mean_fwd_iterations = 0.0;
    double mean_bwd_iterations = 0.0;
    double converged_fraction = 0.0;
    bool protocol_failed = false;  // more than 20% of runs failed
};

// Worker count: TAN_THREADS if set and positive, else hardware concurrency,
// capped by the number of seeds.
std::size_t worker_count(std::size_t jobs);

ProtocolSummary run_protocol(const ExperimentConfig& cfg, const Dataset& ds, const std::string& out_dir = "");
ProtocolSummary run_protocol(const ExperimentConfig& cfg, const std::string& out_dir = "");

void write_epochs_csv(const RunRecord& r, const std::string& path);
void write_summary_csv(const ProtocolSummary& s, const std::string& path);

struct IterationTrend {
    bool available = false;
    std::string note;
    std::size_t decile = 0;  // epochs per decile
    double first_median = 0.0;
    double last_median = 0.0;
    double ratio = 0.0;  // first / last
};

// Median per-epoch mean forward iterations over the first and last tenth of
// epochs. Needs at least 20 epochs.
IterationTrend iteration_trend(std::span<const double> per_epoch_iterations);
IterationTrend iteration_trend(const RunRecord& r);

}  // namespace tanet
