#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "fixture.hpp"
#include "sea/dataset.hpp"
#include "sea/errors.hpp"
#include "sea/model.hpp"

using namespace sea;

namespace {

std::vector<int> histogram(const Dataset& ds) {
    std::vector<int> h(static_cast<std::size_t>(ds.classes), 0);
    for (int y : ds.labels) ++h[static_cast<std::size_t>(y)];
    return h;
}

std::string write_idx_pair(const std::string& dir, std::uint32_t img_magic,
                           std::uint32_t lab_magic, std::uint32_t n_img, std::uint32_t n_lab,
                           bool truncate_pixels = false) {
    std::filesystem::create_directories(dir);
    auto put_be = [](std::ofstream& f, std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
        f.write(reinterpret_cast<char*>(b), 4);
    };
    {
        std::ofstream f(dir + "/img.idx", std::ios::binary | std::ios::trunc);
        put_be(f, img_magic);
        put_be(f, n_img);
        put_be(f, 4);
        put_be(f, 4);
        const std::size_t pixels = static_cast<std::size_t>(n_img) * 16 - (truncate_pixels ? 5 : 0);
        for (std::size_t i = 0; i < pixels; ++i) {
            const unsigned char b = static_cast<unsigned char>(i == 0 ? 255 : i % 256);
            f.write(reinterpret_cast<const char*>(&b), 1);
        }
    }
    {
        std::ofstream f(dir + "/lab.idx", std::ios::binary | std::ios::trunc);
        put_be(f, lab_magic);
        put_be(f, n_lab);
        for (std::uint32_t i = 0; i < n_lab; ++i) {
            const unsigned char b = static_cast<unsigned char>(i % 3);
            f.write(reinterpret_cast<const char*>(&b), 1);
        }
    }
    return dir;
}

} // namespace

TEST_CASE("blobs with n=100, 4 classes is exactly balanced") {
    const Dataset ds = generate_dataset(DataKind::Blobs, 100, 4, {1, 8, 8}, 1);
    CHECK(histogram(ds) == std::vector<int>{25, 25, 25, 25});
}

TEST_CASE("generation is bit-identical for a fixed seed") {
    for (DataKind kind : {DataKind::Blobs, DataKind::Rings, DataKind::Textures}) {
        const Dataset a = generate_dataset(kind, 64, 4, {1, 8, 8}, 9);
        const Dataset b = generate_dataset(kind, 64, 4, {1, 8, 8}, 9);
        CHECK(a.inputs.data == b.inputs.data);
        CHECK(a.labels == b.labels);
        const Dataset c = generate_dataset(kind, 64, 4, {1, 8, 8}, 10);
        CHECK(a.inputs.data != c.inputs.data);
    }
}

TEST_CASE("all generated pixels are in [0,1] and finite") {
    for (DataKind kind : {DataKind::Blobs, DataKind::Rings, DataKind::Textures}) {
        const Dataset ds = generate_dataset(kind, 120, 8, {1, 16, 16}, 33);
        for (double v : ds.inputs.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        CHECK(ds.inputs.all_finite());
    }
}

TEST_CASE("train/test splits are disjoint and cover the dataset") {
    const Dataset ds = generate_dataset(DataKind::Textures, 123, 8, {1, 8, 8}, 2);
    std::set<std::size_t> seen;
    for (std::size_t i : ds.train_indices) seen.insert(i);
    for (std::size_t i : ds.test_indices) seen.insert(i);
    CHECK(seen.size() == ds.size());
    CHECK(ds.train_indices.size() + ds.test_indices.size() == ds.size());
}

TEST_CASE("infeasible generation requests are config errors") {
    CHECK_THROWS_AS(generate_dataset(DataKind::Blobs, 3, 4, {1, 8, 8}, 1), ConfigError);
    CHECK_THROWS_AS(generate_dataset(DataKind::Blobs, 10, 1, {1, 8, 8}, 1), ConfigError);
    CHECK_THROWS_AS(generate_dataset(DataKind::Blobs, 10, 4, {1, 0, 8}, 1), ConfigError);
}

TEST_CASE("idx loader accepts the format constants and scales to [0,1]") {
    const std::string dir = write_idx_pair("build_test_idx_ok", 0x00000803u, 0x00000801u, 6, 6);
    const Dataset ds = load_idx(dir + "/img.idx", dir + "/lab.idx");
    CHECK(ds.size() == 6);
    CHECK(ds.inputs.shape == std::vector<std::size_t>{6, 1, 4, 4});
    CHECK(ds.inputs.data[0] == 1.0); // pixel byte 255 -> exactly 1.0
    CHECK(ds.classes == 3);
    for (double v : ds.inputs.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("idx loader rejects a bad images magic with the offset") {
    const std::string dir = write_idx_pair("build_test_idx_magic", 0x00000801u, 0x00000801u, 4, 4);
    try {
        load_idx(dir + "/img.idx", dir + "/lab.idx");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("magic") != std::string::npos);
        CHECK(msg.find("offset 0") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("idx loader rejects image/label count mismatch naming both counts") {
    const std::string dir = write_idx_pair("build_test_idx_count", 0x00000803u, 0x00000801u, 6, 5);
    try {
        load_idx(dir + "/img.idx", dir + "/lab.idx");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("6") != std::string::npos);
        CHECK(msg.find("5") != std::string::npos);
        CHECK(msg.find("mismatch") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("idx loader rejects truncated pixel data with the offset") {
    const std::string dir =
        write_idx_pair("build_test_idx_trunc", 0x00000803u, 0x00000801u, 6, 6, true);
    try {
        load_idx(dir + "/img.idx", dir + "/lab.idx");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("truncated") != std::string::npos);
        CHECK(msg.find("offset") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("eval set members are classified correctly by every pool model") {
    const auto& w = test::tiny_world();
    CHECK(w.eval_set.indices.size() == 40);
    for (std::size_t idx : w.eval_set.indices) {
        const bool in_test = std::find(w.dataset.test_indices.begin(), w.dataset.test_indices.end(),
                                       idx) != w.dataset.test_indices.end();
        CHECK(in_test);
    }
    // Direct restatement of the contract.
    const Tensor x = w.dataset.gather_inputs(w.eval_set.indices);
    const std::vector<int> y = w.dataset.gather_labels(w.eval_set.indices);
    auto check_model = [&](const Model& m) {
        const Tensor l = m.logits(x);
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double* row = l.data.data() + i * l.dim(1);
            std::size_t best = 0;
            for (std::size_t j = 1; j < l.dim(1); ++j) {
                if (row[j] > row[best]) best = j;
            }
            CHECK(static_cast<int>(best) == y[i]);
        }
    };
    for (const Model& m : w.pool.surrogates) check_model(m);
    for (const Model& m : w.pool.targets) check_model(m);
}

TEST_CASE("eval set construction is deterministic and respects n") {
    const auto& w = test::tiny_world();
    const EvalSet again = build_eval_set(w.dataset, w.pool, 40, 5);
    CHECK(again.indices == w.eval_set.indices);
    const EvalSet other = build_eval_set(w.dataset, w.pool, 40, 6);
    CHECK(other.indices != w.eval_set.indices);
}

TEST_CASE("oversized eval set request names both numbers") {
    const auto& w = test::tiny_world();
    try {
        build_eval_set(w.dataset, w.pool, 100000, 5);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("100000") != std::string::npos);
        CHECK(msg.find("classified correctly") != std::string::npos);
    }
}
