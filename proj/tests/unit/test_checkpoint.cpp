#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "support.hpp"
#include "tan/checkpoint.hpp"
#include "tan/errors.hpp"

using namespace tanet;
using namespace tanet::testing;

TEST_SUITE("checkpoint") {

TEST_CASE("round trip preserves names, shapes and bits") {
    Rng rng(1);
    std::vector<NamedMatrix> t{{"a.w", random_matrix(3, 4, rng)}, {"b", Matrix(1, 1, -0.0)}, {"empty", Matrix(0, 5)}};
    t[0].value(1, 2) = 1e-310;
    TempDir d("ckpt");
    save_checkpoint(d.str("m.ckpt"), t);
    auto back = load_checkpoint(d.str("m.ckpt"));
    REQUIRE(back.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(back[k].name == t[k].name);
        CHECK(back[k].value.rows() == t[k].value.rows());
        CHECK(back[k].value.cols() == t[k].value.cols());
        CHECK(std::memcmp(back[k].value.storage().data(), t[k].value.storage().data(),
                          t[k].value.size() * sizeof(double)) == 0);
    }
    CHECK(std::signbit(back[1].value(0, 0)));
}

TEST_CASE("corrupt files are rejected") {
    TempDir d("ckpt");
    write_text(d.path() / "bad", "NOTACKPT");
    CHECK_THROWS_AS(load_checkpoint(d.str("bad")), InputError);
    CHECK_THROWS_AS(load_checkpoint(d.str("missing")), InputError);
    save_checkpoint(d.str("ok"), {{"x", Matrix(2, 2, 1.0)}});
    auto bytes = read_text(d.path() / "ok");
    write_text(d.path() / "short", bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_checkpoint(d.str("short")), InputError);
}

}
