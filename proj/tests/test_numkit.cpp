#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedpgp/numkit.hpp"
#include "fedpgp/rng.hpp"
#include "support.hpp"

using namespace fedpgp;

TEST_CASE("softmax of equal logits is uniform") {
    const Vector p = softmax({3.7, 3.7, 3.7, 3.7}, 0.9);
    for (double v : p) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax matches hand evaluation of e/(e+1)") {
    const Vector p = softmax({1.0, 0.0}, 1.0);
    CHECK(std::abs(p[0] - 0.7311) < 1e-4);
    CHECK(std::abs(p[1] - 0.2689) < 1e-4);
}

TEST_CASE("softmax survives huge logits without overflow") {
    const Vector p = softmax({1000.0, 0.0}, 1.0);
    CHECK(std::isfinite(p[0]));
    CHECK(std::isfinite(p[1]));
    CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax rejects non-positive temperature") {
    CHECK_THROWS_AS(softmax({1.0, 2.0}, 0.0), InvalidParameter);
    CHECK_THROWS_AS(softmax({1.0, 2.0}, -1.0), InvalidParameter);
}

TEST_CASE("softmax sums to one for arbitrary finite logits") {
    Rng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.below(12);
        Vector logits(n);
        for (double& v : logits) v = (rng.uniform() * 2.0 - 1.0) * 1e3;
        const double tau = 0.01 + rng.uniform() * 2.0;
        const Vector p = softmax(logits, tau);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("cosine similarity basics") {
    CHECK(cosine_sim({3, 4, 0}, {3, 4, 0}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_sim({1, 0}, {0, 1}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(cosine_sim({1, 1}, {1, 0}) - 0.70710678) < 1e-8);
    CHECK_THROWS_AS(cosine_sim({0, 0}, {1, 0}), DegenerateVector);
}

TEST_CASE("cosine similarity is symmetric and scale invariant") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        Vector a(5);
        Vector b(5);
        for (double& v : a) v = rng.gaussian();
        for (double& v : b) v = rng.gaussian();
        const double lambda = 0.1 + rng.uniform() * 10.0;
        Vector scaled = a;
        for (double& v : scaled) v *= lambda;
        CHECK(std::abs(cosine_sim(a, b) - cosine_sim(b, a)) <= 1e-12);
        CHECK(std::abs(cosine_sim(a, b) - cosine_sim(scaled, b)) <= 1e-12);
    }
}

TEST_CASE("normalize basics") {
    const Vector u = normalize({3, 4});
    CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-12));
    const Vector again = normalize(u);
    CHECK(std::abs(again[0] - u[0]) <= 1e-12);
    CHECK(std::abs(again[1] - u[1]) <= 1e-12);
    CHECK(std::abs(norm(u) - 1.0) <= 1e-12);
    CHECK_THROWS_AS(normalize({0, 0}), DegenerateVector);
}

TEST_CASE("finite differences recover the gradient of sum of squares") {
    Matrix x(2, 2);
    x(0, 0) = 1.0;
    x(1, 1) = 1.0;
    const auto f = [](const Matrix& m) {
        double acc = 0.0;
        for (double v : m.data()) acc += v * v;
        return acc;
    };
    const Matrix g = finite_diff_grad(f, x, 1e-5);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(std::abs(g(i, j) - 2.0 * x(i, j)) < 1e-6);
}

TEST_CASE("finite differences of a constant vanish") {
    const Matrix g = finite_diff_grad([](const Matrix&) { return 42.0; }, Matrix(3, 2, 1.5), 1e-5);
    for (double v : g.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("finite differences of a linear functional give the indicator") {
    Rng rng(3);
    const Matrix x = testkit::random_matrix(3, 3, rng);
    const Matrix g = finite_diff_grad([](const Matrix& m) { return m(0, 0); }, x, 1e-5);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(std::abs(g(i, j) - (i == 0 && j == 0 ? 1.0 : 0.0)) < 1e-9);
}

TEST_CASE("equal seeds reproduce the first ten thousand draws") {
    Rng a(123456789);
    Rng b(123456789);
    for (int i = 0; i < 10000; ++i) CHECK(a.next_u32() == b.next_u32());

    Rng c(123456789);
    Rng d(987654321);
    bool all_equal = true;
    for (int i = 0; i < 100; ++i) all_equal = all_equal && (c.next_u32() == d.next_u32());
    CHECK_FALSE(all_equal);
}

TEST_CASE("gaussian draws reproduce under equal seeds") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.gaussian() == b.gaussian());
}

TEST_CASE("shuffle is deterministic per seed") {
    std::vector<int> v1{0, 1, 2, 3, 4, 5, 6, 7};
    std::vector<int> v2 = v1;
    Rng a(5);
    Rng b(5);
    a.shuffle(v1);
    b.shuffle(v2);
    CHECK(v1 == v2);
}

TEST_CASE("jacobi singular values match a known diagonal case") {
    Matrix m(3, 2);
    m(0, 0) = 3.0;
    m(1, 1) = 4.0;
    const auto sv = testkit::singular_values(m);
    CHECK(sv[0] == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(sv[1] == doctest::Approx(3.0).epsilon(1e-10));
}
