#include "tan/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "tan/errors.hpp"
#include "tan/rng.hpp"

namespace tanet {

using nlohmann::json;

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ConfigError("config: at least one seed required");
    if (!(learning_rate > 0.0)) throw ConfigError("config: learning_rate must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("config: weight_decay must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("config: dropout must lie in [0, 1)");
    if (patience < 1) throw ConfigError("config: patience must be >= 1");
    if (max_epochs < 1) throw ConfigError("config: max_epochs must be >= 1");
    if (hidden == 0 || ffn_hidden == 0) throw ConfigError("config: hidden widths must be positive");
    if (heads.empty()) throw ConfigError("config: heads must list at least one layer");
    for (auto h : heads)
        if (h == 0 || hidden % h != 0) throw ConfigError("config: head count must divide hidden");
    if (construction == Construction::laplacian && similarity != SimilarityKind::gaussian_kernel) {
        throw ConfigError("config: the Laplacian construction needs gaussian_kernel similarity");
    }
    solver.validate();
}

ExperimentConfig parse_experiment_config(const json& j) {
    static const std::set<std::string> known{"dataset",  "construction", "learned",    "similarity", "seeds",
                                             "learning_rate", "weight_decay", "dropout", "patience",
                                             "max_epochs", "solver", "hidden", "ffn_hidden", "heads"};
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");
    ExperimentConfig c;
    try {
        c.dataset = j.value("dataset", std::string{});
        if (j.contains("construction")) c.construction = parse_construction(j.at("construction").get<std::string>());
        c.learned = j.value("learned", true);
        c.similarity = j.contains("similarity") ? parse_similarity(j.at("similarity").get<std::string>())
                                                : default_similarity(c.construction).kind;
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.dropout = j.value("dropout", c.dropout);
        c.patience = j.value("patience", (c.construction == Construction::laplacian && !c.learned) ? 200 : 100);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        if (j.contains("solver")) {
            const auto& s = j.at("solver");
            for (auto it = s.begin(); it != s.end(); ++it) {
                if (it.key() != "tol" && it.key() != "max_iter" && it.key() != "damping") {
                    throw ConfigError("config: unknown solver key '" + it.key() + "'");
                }
            }
            c.solver.tol = s.value("tol", c.solver.tol);
            c.solver.max_iter = s.value("max_iter", c.solver.max_iter);
            c.solver.damping = s.value("damping", c.solver.damping);
        }
        c.hidden = j.value("hidden", c.hidden);
        c.ffn_hidden = j.value("ffn_hidden", 2 * c.hidden);
        if (j.contains("heads")) c.heads = j.at("heads").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_experiment_config(j);
}

json to_json(const ExperimentConfig& c) {
    return json{{"dataset", c.dataset},
                {"construction", std::string(to_string(c.construction))},
                {"learned", c.learned},
                {"similarity", std::string(to_string(c.similarity))},
                {"seeds", c.seeds},
                {"learning_rate", c.learning_rate},
                {"weight_decay", c.weight_decay},
                {"dropout", c.dropout},
                {"patience", c.patience},
                {"max_epochs", c.max_epochs},
                {"solver", {{"tol", c.solver.tol}, {"max_iter", c.solver.max_iter}, {"damping", c.solver.damping}}},
                {"hidden", c.hidden},
                {"ffn_hidden", c.ffn_hidden},
                {"heads", c.heads}};
}

ModelConfig make_model_config(const ExperimentConfig& cfg, std::size_t d_in, std::size_t num_classes) {
    cfg.validate();
    ModelConfig m;
    m.d_in = d_in;
    m.num_classes = num_classes;
    m.d_model = cfg.hidden;
    m.input_dropout = cfg.dropout;
    m.solver = cfg.solver;
    for (auto nh : cfg.heads) {
        HeadConfig h;
        h.construction = cfg.construction;
        h.learned = cfg.learned;
        h.similarity = default_similarity(cfg.construction);
        h.similarity.kind = cfg.similarity;
        h.d_latent = cfg.hidden / nh;
        LayerConfig l;
        l.d_model = cfg.hidden;
        l.ffn_hidden = cfg.ffn_hidden;
        l.dropout = cfg.dropout;
        l.heads.assign(nh, h);
        m.layers.push_back(std::move(l));
    }
    return m;
}

// --- Adam ---------------------------------------------------------------------

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamState& st, double lr,
               double weight_decay) {
    if (params.size() != grads.size()) throw InputError("adam_step: parameter and gradient counts differ");
    if (st.m.empty()) {
        for (auto* p : params) {
            st.m.emplace_back(p->rows(), p->cols());
            st.v.emplace_back(p->rows(), p->cols());
        }
    }
    if (st.m.size() != params.size()) throw InputError("adam_step: state does not match parameters");
    ++st.step;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(st.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k];
        const Matrix* g = grads[k];
        if (g && !g->empty() && !g->same_shape(p)) throw InputError("adam_step: gradient shape mismatch");
        if (!st.m[k].same_shape(p)) throw InputError("adam_step: state shape mismatch");
        auto& pd = p.storage();
        auto& md = st.m[k].storage();
        auto& vd = st.v[k].storage();
        for (std::size_t i = 0; i < pd.size(); ++i) {
            double gi = (g && !g->empty()) ? g->data()[i] : 0.0;
            gi += weight_decay * pd[i];
            md[i] = kAdamBeta1 * md[i] + (1.0 - kAdamBeta1) * gi;
            vd[i] = kAdamBeta2 * vd[i] + (1.0 - kAdamBeta2) * gi * gi;
            pd[i] -= lr * (md[i] / bc1) / (std::sqrt(vd[i] / bc2) + kAdamEps);
        }
    }
}

void adam_step(std::span<const Tensor> params, AdamState& st, double lr, double weight_decay) {
    std::vector<Matrix*> p;
    std::vector<const Matrix*> g;
    for (auto t : params) {
        p.push_back(&t.mutable_value());
        g.push_back(t.has_grad() ? &t.grad() : nullptr);
    }
    adam_step(p, g, st, lr, weight_decay);
}

// --- records -----------------------------------------------------------------

double EpochRecord::mean_fwd_iterations() const {
    if (heads.empty()) return 0.0;
    double s = 0.0;
    for (const auto& h : heads) s += h.fwd_iterations;
    return s / static_cast<double>(heads.size());
}

double EpochRecord::mean_bwd_iterations() const {
    if (heads.empty()) return 0.0;
    double s = 0.0;
    for (const auto& h : heads) s += h.bwd_iterations;
    return s / static_cast<double>(heads.size());
}

double EpochRecord::converged_fraction() const {
    if (heads.empty()) return 0.0;
    double s = 0.0;
    for (const auto& h : heads) s += h.fwd_converged;
    return s / static_cast<double>(heads.size());
}

double RunRecord::mean_fwd_iterations() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& e : epochs)
        for (const auto& h : e.heads) s += h.fwd_iterations, ++n;
    return n ? s / static_cast<double>(n) : 0.0;
}

double RunRecord::mean_bwd_iterations() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& e : epochs)
        for (const auto& h : e.heads) s += h.bwd_iterations, ++n;
    return n ? s / static_cast<double>(n) : 0.0;
}

std::size_t RunRecord::forward_solves() const {
    std::size_t n = 0;
    for (const auto& e : epochs) n += e.heads.size();
    return n;
}

double RunRecord::converged_fraction() const {
    std::size_t c = 0;
    for (const auto& e : epochs)
        for (const auto& h : e.heads) c += h.fwd_converged;
    auto n = forward_solves();
    return n ? static_cast<double>(c) / static_cast<double>(n) : 0.0;
}

std::size_t RunRecord::forward_solves_within(int cap) const {
    std::size_t c = 0;
    for (const auto& e : epochs)
        for (const auto& h : e.heads) c += h.fwd_converged && h.fwd_iterations <= cap;
    return c;
}

static std::size_t argmax_row(const Matrix& m, std::size_t r) {
    auto row = m.row(r);
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

double masked_accuracy(const Matrix& logits, std::span<const int> labels, std::span<const std::int32_t> rows) {
    if (rows.empty()) return 0.0;
    std::size_t hit = 0;
    for (auto r : rows) {
        auto i = static_cast<std::size_t>(r);
        hit += argmax_row(logits, i) == static_cast<std::size_t>(labels[i]);
    }
    return static_cast<double>(hit) / static_cast<double>(rows.size());
}

double masked_cross_entropy(const Matrix& logits, std::span<const int> labels, std::span<const std::int32_t> rows) {
    if (rows.empty()) return 0.0;
    double total = 0.0;
    for (auto r : rows) {
        auto i = static_cast<std::size_t>(r);
        auto row = logits.row(i);
        double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        total += mx + std::log(z) - row[static_cast<std::size_t>(labels[i])];
    }
    return total / static_cast<double>(rows.size());
}

// --- training -----------------------------------------------------------------

namespace {

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) { return splitmix64(seed * 0x9e37'79b9'7f4a'7c15ULL + stream); }

std::vector<Matrix> snapshot(const std::vector<Tensor>& params) {
    std::vector<Matrix> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.value());
    return out;
}

}  // namespace

RunRecord train_once(const ExperimentConfig& cfg, const Dataset& ds, const SplitMask& split, std::uint64_t seed,
                     std::vector<NamedMatrix>* best_state) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.seed = seed;

    TanModel model(make_model_config(cfg, ds.feature_dim(), ds.num_classes), derive(seed, 1));
    model.prepare_fixed_precision(ds.features, ds.topology);
    const auto params = model.parameters();
    std::vector<Matrix> best = snapshot(params);
    AdamState adam;
    const auto& train_rows = split.train_rows();
    const auto& val_rows = split.val_rows();
    const std::uint64_t dropout_seed = derive(seed, 2);

    int since_best = 0;
    bool have_best = false;
    try {
        for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
            EpochRecord er;
            er.epoch = epoch;
            {
                Tape tape;
                std::vector<SolveRecord> solves;
                ForwardOptions opt;
                opt.seed = dropout_seed;
                opt.epoch = static_cast<std::uint64_t>(epoch);
                opt.solves = &solves;
                Tensor logits = model.forward(tape, ds.features, ds.topology, Mode::train, opt);
                Tensor loss = row_softmax_cross_entropy(tape, logits, ds.labels, train_rows);
                tape.backward(loss);
                er.train_loss = loss.item();
                adam_step(params, adam, cfg.learning_rate, cfg.weight_decay);
                for (auto p : params) p.zero_grad();
                for (const auto& s : solves) {
                    HeadTelemetry h;
                    h.layer = s.layer;
                    h.head = s.head;
                    h.fwd_iterations = s.stats->forward_iterations;
                    h.fwd_converged = s.stats->forward_converged;
                    h.fwd_residual = s.stats->forward_residual;
                    h.bwd_iterations = s.stats->backward_iterations;
                    h.bwd_converged = s.stats->backward_converged;
                    er.heads.push_back(h);
                }
            }
            Tape eval(false);
            const Matrix logits = model.forward(eval, ds.features, ds.topology, Mode::eval).value();
            er.train_acc = masked_accuracy(logits, ds.labels, train_rows);
            er.val_acc = masked_accuracy(logits, ds.labels, val_rows);
            er.val_loss = masked_cross_entropy(logits, ds.labels, val_rows);
            rec.epochs.push_back(std::move(er));
            const auto& last = rec.epochs.back();

            if (!have_best || last.val_acc > rec.best_val_acc ||
                (last.val_acc == rec.best_val_acc && last.val_loss < rec.best_val_loss)) {
                have_best = true;
                rec.best_epoch = epoch;
                rec.best_val_acc = last.val_acc;
                rec.best_val_loss = last.val_loss;
                best = snapshot(params);
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        rec.failed = true;
        rec.failure = e.what();
    }

    if (!rec.failed) {
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto p = params[k];
            p.mutable_value() = best[k];
        }
        Tape eval(false);
        const Matrix logits = model.forward(eval, ds.features, ds.topology, Mode::eval).value();
        rec.test_acc = masked_accuracy(logits, ds.labels, split.test_rows());
        if (best_state) *best_state = model.state();
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

RunRecord train_once(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed,
                     std::vector<NamedMatrix>* best_state) {
    return train_once(cfg, ds, random_split(ds, seed), seed, best_state);
}

RunRecord train_once(const ExperimentConfig& cfg, std::uint64_t seed) {
    return train_once(cfg, load_dataset(cfg.dataset), seed);
}

std::size_t worker_count(std::size_t jobs) {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("TAN_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) n = static_cast<std::size_t>(v);
    }
    return std::max<std::size_t>(1, std::min(n, jobs));
}

void write_epochs_csv(const RunRecord& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out.precision(10);
    out << "epoch,train_loss,train_acc,val_acc,val_loss,mean_iters_fwd,mean_iters_bwd,converged_fraction";
    if (!r.epochs.empty())
        for (const auto& h : r.epochs.front().heads) {
            const auto tag = "l" + std::to_string(h.layer) + "h" + std::to_string(h.head);
            out << ",fwd_" << tag << ",bwd_" << tag << ",conv_" << tag << ",residual_" << tag;
        }
    out << '\n';
    for (const auto& e : r.epochs) {
        out << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_acc << ',' << e.val_loss << ','
            << e.mean_fwd_iterations() << ',' << e.mean_bwd_iterations() << ',' << e.converged_fraction();
        for (const auto& h : e.heads)
            out << ',' << h.fwd_iterations << ',' << h.bwd_iterations << ',' << (h.fwd_converged ? 1 : 0) << ','
                << h.fwd_residual;
        out << '\n';
    }
}

void write_summary_csv(const ProtocolSummary& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out.precision(10);
    out << "seed,test_acc,epochs,mean_iters_fwd,mean_iters_bwd,converged_fraction\n";
    for (const auto& r : s.runs) {
        out << r.seed << ',';
        if (r.failed) out << "failed";
        else out << r.test_acc;
        out << ',' << r.epochs_run() << ',' << r.mean_fwd_iterations() << ',' << r.mean_bwd_iterations() << ','
            << r.converged_fraction() << '\n';
    }
}

ProtocolSummary run_protocol(const ExperimentConfig& cfg, const Dataset& ds, const std::string& out_dir) {
    cfg.validate();
    ProtocolSummary s;
    s.runs.resize(cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    std::mutex mu;
    auto worker = [&] {
        for (;;) {
            std::size_t k = next++;
            if (k >= cfg.seeds.size()) return;
            try {
                s.runs[k] = train_once(cfg, ds, cfg.seeds[k]);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!fatal) fatal = std::current_exception();
            }
        }
    };
    const std::size_t nw = worker_count(cfg.seeds.size());
    if (nw == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < nw; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (fatal) std::rethrow_exception(fatal);

    std::vector<double> acc;
    double fwd = 0.0, bwd = 0.0, conv = 0.0;
    for (const auto& r : s.runs) {
        if (r.failed) {
            ++s.failures;
            continue;
        }
        acc.push_back(r.test_acc);
        fwd += r.mean_fwd_iterations();
        bwd += r.mean_bwd_iterations();
        conv += r.converged_fraction();
    }
    s.successes = acc.size();
    if (!acc.empty()) {
        const double n = static_cast<double>(acc.size());
        for (double a : acc) s.mean_test_acc += a;
        s.mean_test_acc /= n;
        if (acc.size() > 1) {
            double ss = 0.0;
            for (double a : acc) ss += (a - s.mean_test_acc) * (a - s.mean_test_acc);
            s.std_test_acc = std::sqrt(ss / (n - 1.0));
        }
        s.mean_fwd_iterations = fwd / n;
        s.mean_bwd_iterations = bwd / n;
        s.converged_fraction = conv / n;
    }
    s.protocol_failed = static_cast<double>(s.failures) > 0.2 * static_cast<double>(s.runs.size());

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream(out_dir + "/resolved_config.json") << to_json(cfg).dump(2) << '\n';
        write_summary_csv(s, out_dir + "/summary.csv");
        for (const auto& r : s.runs) write_epochs_csv(r, out_dir + "/epochs_" + std::to_string(r.seed) + ".csv");
    }
    return s;
}

ProtocolSummary run_protocol(const ExperimentConfig& cfg, const std::string& out_dir) {
    return run_protocol(cfg, load_dataset(cfg.dataset), out_dir);
}

IterationTrend iteration_trend(std::span<const double> it) {
    IterationTrend t;
    if (it.size() < 20) {
        t.note = "only " + std::to_string(it.size()) + " epochs recorded, need at least 20";
        return t;
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t m = v.size() / 2;
        return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    };
    t.decile = std::max<std::size_t>(1, it.size() / 10);
    t.first_median = median({it.begin(), it.begin() + static_cast<std::ptrdiff_t>(t.decile)});
    t.last_median = median({it.end() - static_cast<std::ptrdiff_t>(t.decile), it.end()});
    t.ratio = t.last_median > 0.0 ? t.first_median / t.last_median : (t.first_median > 0.0 ? INFINITY : 1.0);
    t.available = true;
    return t;
}

IterationTrend iteration_trend(const RunRecord& r) {
    std::vector<double> v;
    for (const auto& e : r.epochs) v.push_back(e.mean_fwd_iterations());
    return iteration_trend(v);
}

}  // namespace tanet
