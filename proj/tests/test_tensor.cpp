#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "sea/errors.hpp"
#include "sea/tensor.hpp"

using namespace sea;

TEST_CASE("tensor construction checks shape against data") {
    CHECK_NOTHROW(Tensor({2, 3}, std::vector<double>(6, 0.0)));
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 0.0)), ShapeError);
    CHECK(Tensor::zeros({4, 4}).numel() == 16);
    CHECK(Tensor::full({3}, 2.5).data == std::vector<double>{2.5, 2.5, 2.5});
}

TEST_CASE("cosine similarity hits the pinned values") {
    const Tensor a({3}, {1, 2, 3});
    CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));

    const Tensor e1({2}, {1, 0});
    const Tensor e2({2}, {0, 1});
    CHECK(cosine_similarity(e1, e2) == 0.0);

    const Tensor neg({2}, {-1, 0});
    CHECK(cosine_similarity(e1, neg) == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("cosine similarity degenerate and error cases") {
    const Tensor z = Tensor::zeros({3});
    CHECK(cosine_similarity(z, z) == 0.0);
    const Tensor a({3}, {1, 2, 3});
    CHECK(cosine_similarity(z, a) == 0.0);
    CHECK_THROWS_AS(cosine_similarity(a, Tensor::zeros({4})), ShapeError);
}

TEST_CASE("cosine similarity is symmetric, bounded, and 1 on self") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const Tensor a = test::random_tensor({7}, rng);
        const Tensor b = test::random_tensor({7}, rng);
        const double ab = cosine_similarity(a, b);
        CHECK(ab == cosine_similarity(b, a));
        CHECK(ab >= -1.0);
        CHECK(ab <= 1.0);
        CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("sign uses sign(0) = 0") {
    const Tensor t({5}, {-2.0, -0.0, 0.0, 0.5, 3.0});
    CHECK(sign(t).data == std::vector<double>{-1, 0, 0, 1, 1});
}

TEST_CASE("l1 norm and linf distance") {
    const Tensor a({3}, {3, -1, 0});
    CHECK(l1_norm(a) == 4.0);
    const Tensor b({3}, {1, -1, 2});
    CHECK(linf_distance(a, b) == 2.0);
}
