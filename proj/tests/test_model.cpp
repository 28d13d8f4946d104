#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fixture.hpp"
#include "sea/errors.hpp"
#include "sea/model.hpp"

using namespace sea;

namespace {

bool params_equal(const Model& a, const Model& b) {
    if (a.params.size() != b.params.size()) return false;
    for (const auto& [name, t] : a.params) {
        auto it = b.params.find(name);
        if (it == b.params.end() || it->second.data != t.data || it->second.shape != t.shape) {
            return false;
        }
    }
    return true;
}

ArchSpec small_spec(Family family) {
    ArchSpec spec;
    spec.family = family;
    spec.variant = 1;
    spec.input = {1, 8, 8};
    spec.classes = 4;
    return spec;
}

} // namespace

TEST_CASE("build is deterministic in (spec, seed) and differs across seeds") {
    for (Family fam : {Family::Mlp, Family::CnnSmall, Family::CnnWide, Family::CnnDeep}) {
        const ArchSpec spec = small_spec(fam);
        const Model a = Model::build(spec, 77);
        const Model b = Model::build(spec, 77);
        CHECK(params_equal(a, b));
        const Model c = Model::build(spec, 78);
        CHECK_FALSE(params_equal(a, c));
    }
}

TEST_CASE("logits have shape [batch, classes]") {
    ArchSpec spec;
    spec.family = Family::Mlp;
    spec.variant = 2;
    spec.input = {1, 8, 8};
    spec.classes = 4;
    const Model m = Model::build(spec, 1);
    const Tensor x = Tensor::zeros({3, 1, 8, 8});
    CHECK(m.logits(x).shape == std::vector<std::size_t>{3, 4});
}

TEST_CASE("invalid specs are config errors") {
    ArchSpec spec = small_spec(Family::CnnDeep);
    spec.variant = 0;
    CHECK_THROWS_AS(Model::build(spec, 1), ConfigError);
    spec = small_spec(Family::CnnDeep);
    spec.input = {1, 6, 6}; // not divisible by 4
    CHECK_THROWS_AS(Model::build(spec, 1), ConfigError);
    spec = small_spec(Family::Mlp);
    spec.classes = 1;
    CHECK_THROWS_AS(Model::build(spec, 1), ConfigError);
}

TEST_CASE("zero-epoch training leaves parameters unchanged") {
    const auto& w = test::tiny_world();
    const Model m = Model::build(small_spec(Family::CnnSmall), 5);
    const Model out = train(m, w.dataset, 0, 0.05, 9);
    CHECK(params_equal(m, out));
    CHECK_FALSE(out.meta.trained);
}

TEST_CASE("training is bit-deterministic in (model, dataset, seed)") {
    const auto& w = test::tiny_world();
    const Model m = Model::build(small_spec(Family::Mlp), 5);
    const Model a = train(m, w.dataset, 3, 0.05, 9);
    const Model b = train(m, w.dataset, 3, 0.05, 9);
    CHECK(params_equal(a, b));
    CHECK(a.meta.train_accuracy == b.meta.train_accuracy);
    const Model c = train(m, w.dataset, 3, 0.05, 10);
    CHECK_FALSE(params_equal(a, c));
}

TEST_CASE("divergent training reports the epoch") {
    const auto& w = test::tiny_world();
    const Model m = Model::build(small_spec(Family::Mlp), 5);
    try {
        // Large enough that parameter products overflow to inf on the next
        // forward pass even with the gradient clip.
        train(m, w.dataset, 3, 1e290, 9);
        FAIL("expected TrainError");
    } catch (const TrainError& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("dataset shape mismatch is rejected") {
    const auto& w = test::tiny_world();
    ArchSpec spec = small_spec(Family::Mlp);
    spec.input = {1, 16, 16};
    const Model m = Model::build(spec, 5);
    CHECK_THROWS_AS(train(m, w.dataset, 1, 0.05, 9), ShapeError);
}

TEST_CASE("every zoo spec clears the blobs accuracy floor") {
    // Oracle run: 20 epochs of the fixed recipe on the built-in blobs set.
    const Dataset blobs = generate_dataset(DataKind::Blobs, 1000, 8, {1, 16, 16}, 4);
    ZooSpec zoo;
    auto specs = zoo_surrogate_specs(zoo);
    const auto targets = zoo_target_specs(zoo);
    specs.insert(specs.end(), targets.begin(), targets.end());
    for (const ArchSpec& spec : specs) {
        const Model m = Model::build(spec, 1000 + static_cast<std::uint64_t>(spec.variant) * 31 +
                                               static_cast<std::uint64_t>(spec.family));
        const Model tr = train(m, blobs, 20, default_lr(spec.family), 77);
        INFO(spec.id());
        CHECK(tr.meta.test_accuracy >= 0.90);
    }
}

TEST_CASE("weight files round-trip bit-exactly") {
    const auto& w = test::tiny_world();
    const std::string path = "build_test_model.seam";
    const Model& m = w.pool.surrogates[1];
    save_model(m, path);
    const Model loaded = load_model(path);
    CHECK(params_equal(m, loaded));
    CHECK(loaded.spec == m.spec);
    CHECK(loaded.meta.trained == m.meta.trained);
    CHECK(loaded.meta.dataset_id == m.meta.dataset_id);
    CHECK(loaded.meta.epochs == m.meta.epochs);
    CHECK(loaded.meta.train_accuracy == m.meta.train_accuracy);
    CHECK(loaded.meta.test_accuracy == m.meta.test_accuracy);

    // Second save of the loaded model produces identical bytes.
    const std::string path2 = "build_test_model2.seam";
    save_model(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("corrupt magic is rejected without a partial model") {
    const auto& w = test::tiny_world();
    const std::string path = "build_test_badmagic.seam";
    save_model(w.pool.surrogates[0], path);
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.write("XXXX", 4);
    }
    CHECK_THROWS_AS(load_model(path), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("future format version names both versions") {
    const auto& w = test::tiny_world();
    const std::string path = "build_test_version.seam";
    save_model(w.pool.surrogates[0], path);
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(4);
        const unsigned char v2[4] = {2, 0, 0, 0};
        f.write(reinterpret_cast<const char*>(v2), 4);
    }
    try {
        load_model(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2") != std::string::npos);
        CHECK(msg.find("1") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("truncated weight file reports the offset") {
    const auto& w = test::tiny_world();
    const std::string path = "build_test_trunc.seam";
    save_model(w.pool.surrogates[0], path);
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size / 2);
    try {
        load_model(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("pool validation rejects duplicates, copies, and low accuracy") {
    const auto& w = test::tiny_world();
    ModelPool dup;
    dup.surrogates = {w.pool.surrogates[0], w.pool.surrogates[0]};
    CHECK_THROWS_AS(dup.validate(), ConfigError);

    ModelPool low;
    low.surrogates = {w.pool.surrogates[0]};
    low.admission_threshold = 1.01;
    CHECK_THROWS_AS(low.validate(), ConfigError);

    // Same (family, variant) disjointness across surrogates and targets.
    ModelPool overlap;
    overlap.surrogates = {w.pool.surrogates[0]};
    overlap.targets = {w.pool.surrogates[0]};
    CHECK_THROWS_AS(overlap.validate(), ConfigError);
}

TEST_CASE("pool distinctness: parameter cosine below one") {
    const auto& w = test::tiny_world();
    CHECK_NOTHROW(w.pool.validate());
}

TEST_CASE("pool save/load round-trips") {
    const auto& w = test::tiny_world();
    const std::string dir = "build_test_pool";
    save_pool(w.pool, dir);
    const ModelPool loaded = load_pool(dir);
    CHECK(loaded.surrogates.size() == w.pool.surrogates.size());
    CHECK(loaded.targets.size() == w.pool.targets.size());
    for (std::size_t i = 0; i < loaded.surrogates.size(); ++i) {
        CHECK(params_equal(loaded.surrogates[i], w.pool.surrogates[i]));
    }
    CHECK(loaded.admission_threshold == w.pool.admission_threshold);
    std::filesystem::remove_all(dir);
}

TEST_CASE("default zoo composition is 20 surrogates plus 4 held-out targets") {
    ZooSpec zoo;
    const auto sur = zoo_surrogate_specs(zoo);
    const auto tgt = zoo_target_specs(zoo);
    CHECK(sur.size() == 20);
    CHECK(tgt.size() == 4);
    std::set<std::string> ids;
    for (const auto& s : sur) ids.insert(s.id());
    for (const auto& t : tgt) {
        CHECK(t.variant == 6);
        ids.insert(t.id());
    }
    CHECK(ids.size() == 24); // no (family, variant) collisions
}
