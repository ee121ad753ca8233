#include "tan/dataset.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tan/errors.hpp"
#include "tan/rng.hpp"

namespace tanet {

namespace fs = std::filesystem;

namespace {

std::ifstream open_in(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw LoadError(p.filename().string(), "cannot open " + p.string());
    return in;
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r") == std::string::npos; }

template <class T>
T parse_field(std::string_view tok, const char* file, std::size_t line) {
    T v{};
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e) throw LoadError(file, "unreadable value '" + std::string(tok) + "'", line);
    return v;
}

std::vector<std::string_view> split_ws(const std::string& line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.emplace_back(line.data() + i, j - i);
        i = j;
    }
    return out;
}

}  // namespace

void Dataset::validate() const {
    if (!topology) throw InputError("Dataset: missing topology");
    if (topology->node_count() != labels.size() || features.rows() != labels.size()) {
        throw InputError("Dataset: node count mismatch between topology, features and labels");
    }
    if (!features.all_finite()) throw InputError("Dataset: non-finite feature");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw InputError("Dataset: label out of range");
    double s = 0.0;
    for (double r : split_ratios) {
        if (!(r >= 0.0)) throw InputError("Dataset: negative split ratio");
        s += r;
    }
    if (std::abs(s - 1.0) > 1e-9) throw InputError("Dataset: split ratios must sum to 1");
}

void l1_normalize_rows(Matrix& x) {
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (double v : x.row(r)) s += std::abs(v);
        if (s == 0.0) continue;
        for (double& v : x.row(r)) v /= s;
    }
}

Dataset load_dataset(const std::string& dir) {
    const fs::path root(dir);
    if (!fs::is_directory(root)) throw LoadError(dir, "not a directory");
    Dataset ds;
    std::size_t n = 0, d_in = 0;
    {
        auto in = open_in(root / "meta.json");
        nlohmann::json meta;
        try {
            in >> meta;
            ds.name = meta.at("name").get<std::string>();
            ds.num_classes = meta.at("num_classes").get<std::size_t>();
            d_in = meta.at("d_in").get<std::size_t>();
            n = meta.at("node_count").get<std::size_t>();
            auto r = meta.at("split_ratios").get<std::vector<double>>();
            if (r.size() != 3) throw LoadError("meta.json", "split_ratios must have 3 entries");
            std::copy(r.begin(), r.end(), ds.split_ratios.begin());
        } catch (const nlohmann::json::exception& e) {
            throw LoadError("meta.json", e.what());
        }
        if (ds.num_classes == 0) throw LoadError("meta.json", "num_classes must be positive");
        double s = ds.split_ratios[0] + ds.split_ratios[1] + ds.split_ratios[2];
        if (std::abs(s - 1.0) > 1e-9) throw LoadError("meta.json", "split_ratios must sum to 1");
    }

    std::vector<EdgePair> edges;
    {
        auto in = open_in(root / "edges.tsv");
        std::string line;
        std::size_t ln = 0;
        while (std::getline(in, line)) {
            ++ln;
            if (blank(line)) continue;
            auto tok = split_ws(line);
            if (tok.size() != 2) throw LoadError("edges.tsv", "expected 'i<TAB>j'", ln);
            auto i = parse_field<long long>(tok[0], "edges.tsv", ln);
            auto j = parse_field<long long>(tok[1], "edges.tsv", ln);
            if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= n || static_cast<std::size_t>(j) >= n) {
                throw LoadError("edges.tsv", "node index out of range", ln);
            }
            edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
        }
    }
    ds.topology = make_topology(n, edges);

    ds.features = Matrix(n, d_in);
    {
        auto in = open_in(root / "features.tsv");
        std::string line;
        std::size_t ln = 0, row = 0;
        while (std::getline(in, line)) {
            ++ln;
            if (blank(line)) continue;
            if (row >= n) throw LoadError("features.tsv", "more rows than node_count", ln);
            auto tok = split_ws(line);
            if (tok.size() != d_in) {
                throw LoadError("features.tsv", "expected " + std::to_string(d_in) + " values, got " +
                                                    std::to_string(tok.size()), ln);
            }
            for (std::size_t c = 0; c < d_in; ++c) {
                double v = parse_field<double>(tok[c], "features.tsv", ln);
                if (!std::isfinite(v)) throw LoadError("features.tsv", "non-finite value", ln);
                ds.features(row, c) = v;
            }
            ++row;
        }
        if (row != n) throw LoadError("features.tsv", "expected " + std::to_string(n) + " rows, got " + std::to_string(row));
    }
    l1_normalize_rows(ds.features);

    {
        auto in = open_in(root / "labels.tsv");
        std::string line;
        std::size_t ln = 0;
        while (std::getline(in, line)) {
            ++ln;
            if (blank(line)) continue;
            auto tok = split_ws(line);
            if (tok.size() != 1) throw LoadError("labels.tsv", "expected one label per line", ln);
            if (ds.labels.size() >= n) throw LoadError("labels.tsv", "more labels than node_count", ln);
            int y = parse_field<int>(tok[0], "labels.tsv", ln);
            if (y < 0 || static_cast<std::size_t>(y) >= ds.num_classes) {
                throw LoadError("labels.tsv", "label " + std::to_string(y) + " out of range", ln);
            }
            ds.labels.push_back(y);
        }
        if (ds.labels.size() != n) {
            throw LoadError("labels.tsv", "expected " + std::to_string(n) + " labels, got " +
                                              std::to_string(ds.labels.size()));
        }
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
    ds.validate();
    fs::create_directories(dir);
    const fs::path root(dir);
    nlohmann::json meta = {{"name", ds.name},
                           {"num_classes", ds.num_classes},
                           {"d_in", ds.feature_dim()},
                           {"node_count", ds.node_count()},
                           {"split_ratios", ds.split_ratios}};
    std::ofstream(root / "meta.json") << meta.dump(2) << "\n";
    {
        std::ofstream out(root / "edges.tsv");
        for (const auto& e : ds.topology->edge_list()) out << e.i << '\t' << e.j << '\n';
    }
    {
        std::ofstream out(root / "features.tsv");
        out.precision(17);
        for (std::size_t r = 0; r < ds.features.rows(); ++r) {
            for (std::size_t c = 0; c < ds.features.cols(); ++c) out << (c ? "\t" : "") << ds.features(r, c);
            out << '\n';
        }
    }
    std::ofstream out(root / "labels.tsv");
    for (int y : ds.labels) out << y << '\n';
    if (!out) throw InputError("save_dataset: write failed in " + dir);
}

SplitMask::SplitMask(std::vector<Split> assignment, std::uint64_t seed)
    : assignment_(std::move(assignment)), seed_(seed) {
    for (std::size_t i = 0; i < assignment_.size(); ++i) {
        auto id = static_cast<std::int32_t>(i);
        switch (assignment_[i]) {
            case Split::train: train_.push_back(id); break;
            case Split::val: val_.push_back(id); break;
            case Split::test: test_.push_back(id); break;
        }
    }
}

const std::vector<std::int32_t>& SplitMask::test_rows() const {
    ++test_accesses_;
    return test_;
}

SplitMask random_split(std::size_t n, const std::array<double, 3>& ratios, std::uint64_t seed) {
    std::vector<std::int32_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::int32_t>(i);
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
    auto n_val = static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);
    std::vector<Split> a(n, Split::test);
    for (std::size_t k = 0; k < n_train; ++k) a[static_cast<std::size_t>(perm[k])] = Split::train;
    for (std::size_t k = n_train; k < n_train + n_val; ++k) a[static_cast<std::size_t>(perm[k])] = Split::val;
    return SplitMask(std::move(a), seed);
}

SplitMask random_split(const Dataset& ds, std::uint64_t seed) {
    return random_split(ds.node_count(), ds.split_ratios, seed);
}

double edge_homophily(const GraphTopology& g, const std::vector<int>& labels) {
    if (g.edge_count() == 0) throw DomainError("edge_homophily: graph has no edges");
    if (labels.size() != g.node_count()) throw InputError("edge_homophily: label count mismatch");
    std::size_t same = 0;
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        auto id = static_cast<EdgeId>(e);
        same += labels[static_cast<std::size_t>(g.lo(id))] == labels[static_cast<std::size_t>(g.hi(id))];
    }
    return static_cast<double>(same) / static_cast<double>(g.edge_count());
}

double edge_homophily(const Dataset& ds) { return edge_homophily(*ds.topology, ds.labels); }

}  // namespace tanet
