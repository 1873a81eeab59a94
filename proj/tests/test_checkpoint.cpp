#include <doctest.h>

#include <fstream>

#include "sodkit/checkpoint.hpp"
#include "sodkit/model.hpp"

using namespace sodkit;

namespace {

namespace fs = std::filesystem;

fs::path temp_root() {
    const auto p = fs::temp_directory_path() / "sodkit_ckpt_test";
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ParamStore small_store(std::uint64_t seed) {
    ParamStore store;
    Rng rng(seed);
    store.param("a.weight", Shape{3, 2}, rng, 0.5);
    store.param("a.bias", Shape{2}, rng, 0.0);
    store.buffer("a.running", Shape{2}, 1.0);
    store.param("b.weight", Shape{4}, rng, 1.0);
    return store;
}

}  // namespace

TEST_CASE("checkpoint round trip restores every value exactly") {
    const auto path = temp_root() / "roundtrip.ckpt";
    auto store = small_store(1);
    save_checkpoint(store, path);
    auto other = small_store(2);  // same structure, different values
    load_checkpoint(other, path);
    for (const auto& [name, e] : store.entries())
        CHECK(other.at(name)->data == e.value->data);
}

TEST_CASE("saving is byte deterministic") {
    const auto a = temp_root() / "det_a.ckpt";
    const auto b = temp_root() / "det_b.ckpt";
    auto store = small_store(3);
    save_checkpoint(store, a);
    save_checkpoint(store, b);
    CHECK(slurp(a) == slurp(b));
}

TEST_CASE("shape mismatches name the offending parameter") {
    const auto path = temp_root() / "mismatch.ckpt";
    save_checkpoint(small_store(4), path);

    ParamStore wrong_shape;
    Rng rng(5);
    wrong_shape.param("a.weight", Shape{2, 2}, rng, 0.5);  // 3x2 in the file
    wrong_shape.param("a.bias", Shape{2}, rng, 0.0);
    wrong_shape.buffer("a.running", Shape{2}, 1.0);
    wrong_shape.param("b.weight", Shape{4}, rng, 1.0);
    try {
        load_checkpoint(wrong_shape, path);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("a.weight") != std::string::npos);
    }

    ParamStore wrong_set;
    wrong_set.param("zz", Shape{1}, rng, 0.0);
    CHECK_THROWS_AS(load_checkpoint(wrong_set, path), ValidationError);
}

TEST_CASE("corrupt and truncated files are rejected") {
    const auto path = temp_root() / "garbage.ckpt";
    std::ofstream(path) << "not a checkpoint\n";
    auto store = small_store(6);
    CHECK_THROWS_AS(load_checkpoint(store, path), IoError);

    const auto full = temp_root() / "full.ckpt";
    save_checkpoint(store, full);
    const auto data = slurp(full);
    const auto cut = temp_root() / "cut.ckpt";
    std::ofstream(cut, std::ios::binary) << data.substr(0, data.size() - 16);
    CHECK_THROWS_AS(load_checkpoint(store, cut), IoError);

    CHECK_THROWS_AS(load_checkpoint(store, temp_root() / "absent.ckpt"), IoError);
}

TEST_CASE("a full network survives the round trip") {
    ModelConfig cfg;
    cfg.side = 32;
    cfg.widths = {4, 4, 8, 8};
    cfg.depths = {1, 1, 1, 1};
    cfg.sr_factors = {4, 2, 1, 1};
    cfg.cg = 16;
    cfg.dec_width = 8;
    Network net(cfg, 7);
    const auto path = temp_root() / "net.ckpt";
    save_checkpoint(net.params(), path);
    Network other(cfg, 8);
    load_checkpoint(other.params(), path);
    auto img = make_value(Shape{1, 3, 32, 32});
    Rng rng(9);
    for (auto& v : img->data) v = rng.uniform();
    auto a = net.forward(img, false);
    auto b = other.forward(img, false);
    CHECK(a.stages[0].p2_full->data == b.stages[0].p2_full->data);
}
