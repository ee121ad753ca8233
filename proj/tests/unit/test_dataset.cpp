#include <doctest.h>

#include <numeric>

#include "support.hpp"
#include "tan/dataset.hpp"
#include "tan/errors.hpp"

using namespace tanet;
using namespace tanet::testing;

namespace {

void write_two_node(const TempDir& d, const std::string& edges = "0\t1\n1\t0\n") {
    write_text(d.path() / "meta.json",
               R"({"name": "pair", "num_classes": 2, "d_in": 2, "node_count": 2, "split_ratios": [0.5, 0.5, 0.0]})");
    write_text(d.path() / "edges.tsv", edges);
    write_text(d.path() / "features.tsv", "1\t3\n0\t0\n");
    write_text(d.path() / "labels.tsv", "0\n1\n");
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("loads a two node directory") {
    TempDir d("ds");
    write_two_node(d);
    auto ds = load_dataset(d.str());
    CHECK(ds.name == "pair");
    CHECK(ds.node_count() == 2);
    CHECK(ds.feature_dim() == 2);
    CHECK(ds.topology->edge_count() == 1);
    CHECK(ds.labels == std::vector<int>{0, 1});
    CHECK(ds.features(0, 0) == 0.25);
    CHECK(ds.features(0, 1) == 0.75);
    CHECK(ds.features(1, 0) == 0.0);
    CHECK(ds.split_ratios[1] == 0.5);
}

TEST_CASE("duplicate edges and self loops collapse") {
    TempDir d("ds");
    write_two_node(d, "0\t1\n1\t0\n0\t1\n1\t1\n");
    CHECK(load_dataset(d.str()).topology->edge_count() == 1);
}

TEST_CASE("row normalization") {
    Matrix x(3, 3, std::vector<double>{1, 1, 2, 0, 0, 0, -1, 3, 0});
    l1_normalize_rows(x);
    CHECK(x.storage() == std::vector<double>{0.25, 0.25, 0.5, 0, 0, 0, -0.25, 0.75, 0});
}

TEST_CASE("malformed files cite the file and line") {
    TempDir d("ds");
    write_two_node(d, "0\t1\n0\tx\n");
    try {
        load_dataset(d.str());
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(e.file() == "edges.tsv");
        CHECK(e.line() == 2);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    write_two_node(d, "0\t7\n");
    CHECK_THROWS_AS(load_dataset(d.str()), LoadError);
    write_two_node(d);
    write_text(d.path() / "labels.tsv", "0\n5\n");
    try {
        load_dataset(d.str());
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(e.file() == "labels.tsv");
        CHECK(e.line() == 2);
    }
    write_two_node(d);
    write_text(d.path() / "features.tsv", "1\t3\n0\n");
    CHECK_THROWS_AS(load_dataset(d.str()), LoadError);
    write_two_node(d);
    std::filesystem::remove(d.path() / "meta.json");
    CHECK_THROWS_AS(load_dataset(d.str()), LoadError);
    CHECK_THROWS_AS(load_dataset(d.str("missing")), LoadError);
}

TEST_CASE("save and load round trip") {
    auto ds = synthetic_dataset(40, 7, 3, 0.6, 2);
    TempDir d("ds");
    save_dataset(ds, d.str());
    auto back = load_dataset(d.str());
    CHECK(back.name == ds.name);
    CHECK(back.num_classes == ds.num_classes);
    CHECK(back.labels == ds.labels);
    CHECK(back.topology->edge_list() == ds.topology->edge_list());
    CHECK(max_abs_diff(back.features, ds.features) <= 1e-15);
    CHECK(back.split_ratios == ds.split_ratios);
}

TEST_CASE("split sizes") {
    auto s = random_split(8, {0.5, 0.25, 0.25}, 1);
    CHECK(s.train_rows().size() == 4);
    CHECK(s.val_rows().size() == 2);
    CHECK(s.test_count() == 2);
    CHECK(s.test_accesses() == 0);
    CHECK(s.test_rows().size() == 2);
    CHECK(s.test_accesses() == 1);
    auto r = random_split(10, {0.48, 0.32, 0.20}, 3);
    CHECK(r.train_rows().size() == 5);
    CHECK(r.val_rows().size() == 3);
    CHECK(r.test_count() == 2);
}

TEST_CASE("splits are deterministic partitions") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto a = random_split(97, {0.6, 0.2, 0.2}, seed);
        auto b = random_split(97, {0.6, 0.2, 0.2}, seed);
        CHECK(a.train_rows() == b.train_rows());
        CHECK(a.val_rows() == b.val_rows());
        std::vector<int> seen(97, 0);
        for (auto i : a.train_rows()) ++seen[static_cast<std::size_t>(i)];
        for (auto i : a.val_rows()) ++seen[static_cast<std::size_t>(i)];
        for (auto i : a.test_rows()) ++seen[static_cast<std::size_t>(i)];
        CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
        for (auto i : a.train_rows()) CHECK(a.at(static_cast<std::size_t>(i)) == Split::train);
    }
    CHECK(random_split(97, {0.6, 0.2, 0.2}, 1).train_rows() != random_split(97, {0.6, 0.2, 0.2}, 2).train_rows());
}

TEST_CASE("splits are not stratified") {
    // Over many seeds some train split must drift at least 10% from the
    // population class balance.
    auto ds = synthetic_dataset(60, 3, 2, 0.5, 8);
    const double pop = std::accumulate(ds.labels.begin(), ds.labels.end(), 0.0) / 60.0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        auto s = random_split(ds, seed);
        double ones = 0;
        for (auto i : s.train_rows()) ones += ds.labels[static_cast<std::size_t>(i)];
        worst = std::max(worst, std::abs(ones / static_cast<double>(s.train_rows().size()) - pop));
    }
    CHECK(worst >= 0.10);
}

TEST_CASE("edge homophily") {
    auto topo = make_topology(4, std::vector<EdgePair>{{0, 1}, {2, 3}});
    CHECK(edge_homophily(*topo, {0, 0, 1, 1}) == 1.0);
    CHECK(edge_homophily(*topo, {0, 1, 1, 1}) == 0.5);
    CHECK_THROWS_AS(edge_homophily(*make_topology(3, {}), {0, 1, 0}), DomainError);
    auto ds = synthetic_dataset(50, 4, 3, 0.4, 9);
    const double h = edge_homophily(ds);
    std::vector<int> perm(3);
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[0], perm[2]);
    std::vector<int> relabelled = ds.labels;
    for (auto& y : relabelled) y = perm[static_cast<std::size_t>(y)];
    CHECK(edge_homophily(*ds.topology, relabelled) == h);
}

TEST_CASE("validation") {
    auto ds = toy_dataset();
    ds.validate();
    ds.labels[0] = 7;
    CHECK_THROWS_AS(ds.validate(), InputError);
    ds = toy_dataset();
    ds.split_ratios = {0.5, 0.5, 0.5};
    CHECK_THROWS_AS(ds.validate(), InputError);
}

}
