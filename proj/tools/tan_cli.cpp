// tan: command-line driver for the solver, verification suites, training and
// correlation export.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "tan/checkpoint.hpp"
#include "tan/dataset.hpp"
#include "tan/errors.hpp"
#include "tan/gabp.hpp"
#include "tan/spectral.hpp"
#include "tan/train.hpp"
#include "tan/verify.hpp"

namespace fs = std::filesystem;
using namespace tanet;

namespace {

enum ExitCode { kOk = 0, kInvariant = 1, kInput = 2, kNotConverged = 3 };

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> construction;
    std::optional<double> tol;
    std::optional<int> max_iter;
    std::optional<double> damping;
    std::optional<std::string> dataset;

    void add_solver_flags(CLI::App* app) {
        app->add_option("--tol", tol, "GaBP convergence tolerance");
        app->add_option("--max-iter", max_iter, "GaBP iteration cap");
        app->add_option("--damping", damping, "weight on the previous message, in [0, 1)");
    }
    void add_run_flags(CLI::App* app) {
        app->add_option("--seed", seed, "run only this seed");
        app->add_option("--construction", construction, "pairwise_normal | diag_dominant | laplacian");
        app->add_option("--dataset", dataset, "dataset directory (overrides the config)");
        add_solver_flags(app);
    }
    void apply(SolverConfig& s) const {
        if (tol) s.tol = *tol;
        if (max_iter) s.max_iter = *max_iter;
        if (damping) s.damping = *damping;
    }
    // Overrides go through the JSON form so dependent defaults re-resolve.
    ExperimentConfig apply(const std::string& config_path) const {
        std::ifstream in(config_path);
        if (!in) throw InputError("cannot open config " + config_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(config_path + ": " + e.what());
        }
        if (construction) {
            j["construction"] = *construction;
            if (!j.contains("similarity") || parse_construction(*construction) == Construction::laplacian)
                j["similarity"] = std::string(to_string(default_similarity(parse_construction(*construction)).kind));
        }
        if (seed) j["seeds"] = std::vector<std::uint64_t>{*seed};
        if (dataset) j["dataset"] = *dataset;
        if (tol) j["solver"]["tol"] = *tol;
        if (max_iter) j["solver"]["max_iter"] = *max_iter;
        if (damping) j["solver"]["damping"] = *damping;
        auto cfg = parse_experiment_config(j);
        if (!cfg.dataset.empty() && fs::path(cfg.dataset).is_relative() && !fs::exists(cfg.dataset)) {
            // Relative dataset paths resolve against the config file's directory as a fallback.
            auto alt = fs::path(config_path).parent_path() / cfg.dataset;
            if (fs::exists(alt)) cfg.dataset = alt.string();
        }
        return cfg;
    }
};

void write_resolved(const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream(fs::path(out_dir) / "resolved_config.json") << to_json(cfg).dump(2) << '\n';
}

int cmd_solve(const std::string& matrix, const std::string& h_path, const std::string& out, const Overrides& ov) {
    auto J = read_matrix_file(matrix);
    auto h = read_dense_file(h_path);
    SolverConfig cfg;
    ov.apply(cfg);
    cfg.validate();
    auto res = gabp_solve(J, h, cfg);
    const double r = residual(J, res.mu, h);
    std::ofstream f(out);
    if (!f) throw InputError("cannot write " + out);
    f << "# iterations " << res.iterations << "\n# converged " << (res.converged ? "true" : "false")
      << "\n# residual " << r << "\n# final_delta " << res.final_delta << '\n';
    write_dense_text(f, res.mu);
    std::cout << "iterations " << res.iterations << "\nconverged " << (res.converged ? "true" : "false")
              << "\nresidual " << r << '\n';
    return res.converged ? kOk : kNotConverged;
}

int cmd_verify(bool quick, const std::string& fault, const std::string& csv, std::uint64_t seed) {
    VerifyOptions opt;
    opt.quick = quick;
    opt.seed = seed;
    if (fault == "broken-builder") opt.fault = Fault::broken_builder;
    else if (!fault.empty()) throw InputError("unknown fault '" + fault + "' (expected broken-builder)");
    auto rep = run_verify(opt);
    print_report(std::cout, rep);
    if (!csv.empty()) {
        std::ofstream f(csv);
        if (!f) throw InputError("cannot write " + csv);
        write_report_csv(f, rep);
    }
    return rep.passed() ? kOk : kInvariant;
}

void print_trend(const RunRecord& r) {
    auto t = iteration_trend(r);
    if (t.available) {
        std::cout << "iteration trend (seed " << r.seed << "): first-decile median " << t.first_median
                  << ", last-decile median " << t.last_median << ", ratio " << t.ratio << '\n';
    } else {
        std::cout << "iteration trend (seed " << r.seed << "): omitted, " << t.note << '\n';
    }
}

int cmd_train(const std::string& config, const std::string& out, const Overrides& ov) {
    auto cfg = ov.apply(config);
    cfg.seeds.resize(1);
    write_resolved(cfg, out);
    auto ds = load_dataset(cfg.dataset);
    std::vector<NamedMatrix> best;
    auto r = train_once(cfg, ds, cfg.seeds[0], &best);
    write_epochs_csv(r, (fs::path(out) / ("epochs_" + std::to_string(r.seed) + ".csv")).string());
    ProtocolSummary s;
    s.runs.push_back(r);
    write_summary_csv(s, (fs::path(out) / "summary.csv").string());
    if (r.failed) {
        std::cerr << "run failed: " << r.failure << '\n';
        return kInvariant;
    }
    save_checkpoint((fs::path(out) / "model.ckpt").string(), best);
    std::cout << "seed " << r.seed << ": test accuracy " << r.test_acc << " (best val epoch " << r.best_epoch << " of "
              << r.epochs_run() << ", mean forward iterations " << r.mean_fwd_iterations() << ", converged fraction "
              << r.converged_fraction() << ")\n";
    print_trend(r);
    return kOk;
}

int cmd_sweep(const std::string& config, const std::string& out, const Overrides& ov) {
    auto cfg = ov.apply(config);
    auto s = run_protocol(cfg, out);
    for (const auto& r : s.runs) {
        if (r.failed) std::cout << "seed " << r.seed << ": FAILED " << r.failure << '\n';
        else std::cout << "seed " << r.seed << ": " << r.test_acc << " (" << r.epochs_run() << " epochs)\n";
    }
    std::printf("test accuracy %.2f +- %.2f over %zu runs (%zu failed)\n", 100.0 * s.mean_test_acc,
                100.0 * s.std_test_acc, s.successes, s.failures);
    std::cout << "mean forward iterations " << s.mean_fwd_iterations << ", backward " << s.mean_bwd_iterations
              << ", converged fraction " << s.converged_fraction << '\n';
    for (const auto& r : s.runs)
        if (!r.failed) print_trend(r);
    return s.protocol_failed ? kInvariant : kOk;
}

constexpr std::size_t kMaxAnalyzeNodes = 2000;

void write_csv_matrix(const fs::path& p, const Matrix& m) {
    std::ofstream f(p);
    if (!f) throw InputError("cannot write " + p.string());
    f.precision(10);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) f << (c ? "," : "") << m(r, c);
        f << '\n';
    }
}

int export_correlation(const SparseSymmetricMatrix& J, const std::string& out, SolverConfig solver) {
    const std::size_t n = J.size();
    if (n > kMaxAnalyzeNodes) {
        throw InputError("analyze: " + std::to_string(n) + " nodes exceeds the limit of " +
                         std::to_string(kMaxAnalyzeNodes) + " (output is quadratic)");
    }
    // Columns of J^{-1} from unit-vector solves, in blocks.
    Matrix inv(n, n);
    bool all_converged = true;
    const std::size_t block = 64;
    for (std::size_t c0 = 0; c0 < n; c0 += block) {
        const std::size_t w = std::min(block, n - c0);
        Matrix e(n, w);
        for (std::size_t k = 0; k < w; ++k) e(c0 + k, k) = 1.0;
        auto res = gabp_solve(J, e, solver);
        all_converged = all_converged && res.converged;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = 0; k < w; ++k) inv(r, c0 + k) = res.mu(r, k);
    }
    auto ord = fiedler_order(J);
    if (!ord.warning.empty()) std::cerr << "warning: " << ord.warning << '\n';
    Matrix corr(n, n), adj(n, n);
    const auto& g = J.graph();
    std::vector<std::size_t> pos(n);
    for (std::size_t k = 0; k < n; ++k) pos[static_cast<std::size_t>(ord.order[k])] = k;
    for (std::size_t a = 0; a < n; ++a) {
        const auto i = static_cast<std::size_t>(ord.order[a]);
        for (std::size_t b = 0; b < n; ++b) {
            const auto j = static_cast<std::size_t>(ord.order[b]);
            const double s = 0.5 * (inv(i, j) + inv(j, i));
            corr(a, b) = s / std::sqrt(inv(i, i) * inv(j, j));
        }
        for (auto nb : g.neighbors(static_cast<NodeId>(i))) adj(a, pos[static_cast<std::size_t>(nb)]) = 1.0;
    }
    fs::create_directories(out);
    write_csv_matrix(fs::path(out) / "correlation.csv", corr);
    write_csv_matrix(fs::path(out) / "adjacency.csv", adj);
    std::ofstream f(fs::path(out) / "order.csv");
    f << "position,node\n";
    for (std::size_t k = 0; k < n; ++k) f << k << ',' << ord.order[k] << '\n';
    std::cout << "wrote " << n << "x" << n << " correlation to " << out << '\n';
    if (!all_converged) {
        std::cerr << "warning: some unit-vector solves did not converge\n";
        return kNotConverged;
    }
    return kOk;
}

int cmd_analyze(const std::string& config, const std::string& checkpoint, const std::string& matrix, std::size_t layer,
                std::size_t head, const std::string& out, const Overrides& ov) {
    if (!matrix.empty()) {
        SolverConfig s;
        ov.apply(s);
        return export_correlation(read_matrix_file(matrix), out, s);
    }
    if (config.empty() || checkpoint.empty()) throw InputError("analyze needs --config and --checkpoint, or --matrix");
    auto cfg = ov.apply(config);
    auto ds = load_dataset(cfg.dataset);
    if (ds.node_count() > kMaxAnalyzeNodes) {
        throw InputError("analyze: " + std::to_string(ds.node_count()) + " nodes exceeds the limit of " +
                         std::to_string(kMaxAnalyzeNodes) + " (output is quadratic)");
    }
    TanModel model(make_model_config(cfg, ds.feature_dim(), ds.num_classes), 0);
    model.load_state(load_checkpoint(checkpoint));
    model.prepare_fixed_precision(ds.features, ds.topology);
    auto J = model.head_precision(ds.features, ds.topology, layer, head);
    return export_correlation(J, out, cfg.solver);
}

int cmd_convert_check(const std::string& dir) {
    auto ds = load_dataset(dir);
    std::cout << "name " << ds.name << "\nnodes " << ds.node_count() << "\nedges " << ds.topology->edge_count()
              << "\nfeatures " << ds.feature_dim() << "\nclasses " << ds.num_classes << "\nsplit " << ds.split_ratios[0]
              << ' ' << ds.split_ratios[1] << ' ' << ds.split_ratios[2] << '\n';
    if (ds.topology->edge_count() > 0) std::printf("homophily %.4f\n", edge_homophily(ds));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tan: GaBP solver, verification, training and analysis"};
    app.require_subcommand(1);

    Overrides ov;
    std::string matrix, h_path, out, config, checkpoint, fault, csv, dataset_dir;
    bool quick = false;
    std::uint64_t verify_seed = 0;
    std::size_t layer = 0, head = 0;

    auto* solve = app.add_subcommand("solve", "solve J mu = h with GaBP");
    solve->set_help_flag("--help", "print this help");  // frees -h for --h
    solve->add_option("--matrix", matrix, "precision matrix file")->required();
    solve->add_option("--h", h_path, "right-hand side file (N rows)")->required();
    solve->add_option("--out", out, "output file for mu")->required();
    ov.add_solver_flags(solve);

    auto* verify = app.add_subcommand("verify", "run the oracle, walk-summability and gradient suites");
    verify->add_flag("--quick", quick, "reduced sizes");
    verify->add_option("--inject-fault", fault, "negative control: broken-builder");
    verify->add_option("--csv", csv, "also write a CSV report");
    verify->add_option("--seed", verify_seed, "instance seed");

    auto* train = app.add_subcommand("train", "train one seed");
    train->add_option("--config", config, "experiment config (JSON)")->required();
    train->add_option("--out", out, "output directory")->required();
    ov.add_run_flags(train);

    auto* sweep = app.add_subcommand("sweep", "train every seed in the config");
    sweep->add_option("--config", config, "experiment config (JSON)")->required();
    sweep->add_option("--out", out, "output directory")->required();
    ov.add_run_flags(sweep);

    auto* analyze = app.add_subcommand("analyze", "export a head's correlation matrix in Fiedler order");
    analyze->add_option("--config", config, "experiment config (JSON)");
    analyze->add_option("--checkpoint", checkpoint, "model checkpoint");
    analyze->add_option("--matrix", matrix, "analyze a precision matrix file instead of a model head");
    analyze->add_option("--layer", layer, "layer index (0-based)");
    analyze->add_option("--head", head, "head index (0-based)");
    analyze->add_option("--out", out, "output directory")->required();
    ov.add_run_flags(analyze);

    auto* convert = app.add_subcommand("convert-check", "load a converted dataset directory and print its statistics");
    convert->add_option("--dataset", dataset_dir, "dataset directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInput;
    }

    try {
        if (*solve) return cmd_solve(matrix, h_path, out, ov);
        if (*verify) return cmd_verify(quick, fault, csv, verify_seed);
        if (*train) return cmd_train(config, out, ov);
        if (*sweep) return cmd_sweep(config, out, ov);
        if (*analyze) return cmd_analyze(config, checkpoint, matrix, layer, head, out, ov);
        if (*convert) return cmd_convert_check(dataset_dir);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInput;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInput;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvariant;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInput;
    }
    return kOk;
}
