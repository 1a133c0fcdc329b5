#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "nightbird/errors.hpp"
#include "nightbird/rng.hpp"
#include "nightbird/tensor.hpp"

using namespace nightbird;

TEST_CASE("tensor layout is row-major CHW") {
    Tensor t = Tensor::zeros({2, 3, 4});
    CHECK(t.rank() == 3);
    CHECK(t.numel() == 24);
    CHECK(t.channels() == 2);
    CHECK(t.height() == 3);
    CHECK(t.width() == 4);
    t.at(1, 2, 3) = 7.0;
    CHECK(t.data[1 * 12 + 2 * 4 + 3] == 7.0);
    t.at(0, 0, 1) = -1.0;
    CHECK(t.data[1] == -1.0);
}

TEST_CASE("tensor statistics and clamping") {
    Tensor t{{2, 2}, {-1.0, 0.25, 0.5, 2.0}};
    CHECK(t.min_value() == -1.0);
    CHECK(t.max_value() == 2.0);
    CHECK(t.mean_value() == doctest::Approx(0.4375));
    CHECK_FALSE(t.all_in_range(0.0, 1.0));
    Tensor c = t.clamped(0.0, 1.0);
    CHECK(c.data == std::vector<double>{0.0, 0.25, 0.5, 1.0});
    CHECK(c.all_in_range(0.0, 1.0));

    t.data[2] = std::nan("");
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("tensors_equal is exact, not approximate") {
    Tensor a = Tensor::full({3}, 0.1);
    Tensor b = a;
    CHECK(tensors_equal(a, b));
    b.data[1] += 1e-17;  // below any reasonable epsilon, still unequal bits
    CHECK_FALSE(tensors_equal(a, b));
    CHECK_FALSE(tensors_equal(a, Tensor::full({4}, 0.1)));
}

TEST_CASE("rng streams are reproducible and seed-sensitive") {
    Rng a(123), b(123), c(124);
    bool diverged = false;
    bool identical = true;
    for (int i = 0; i < 64; ++i) {
        const uint64_t va = a.next_u64();
        identical = identical && va == b.next_u64();
        diverged = diverged || va != c.next_u64();
    }
    CHECK(identical);
    CHECK(diverged);
}

TEST_CASE("uniform draws respect their bounds") {
    Rng rng(7);
    double lo = 1e9, hi = -1e9;
    for (int i = 0; i < 10'000; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    // with 10k draws the extremes should get close to the bounds
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);

    for (int i = 0; i < 1000; ++i) {
        const double v = rng.uniform(-2.5, 3.5);
        CHECK(v >= -2.5);
        CHECK(v < 3.5);
    }
}

TEST_CASE("uniform_index covers every bucket without bias toward overflow") {
    Rng rng(99);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 7000; ++i) ++counts[rng.uniform_index(7)];
    for (int k = 0; k < 7; ++k) CHECK(counts[k] > 700);  // fair-ish split of 7000
}

TEST_CASE("gaussian has roughly the requested moments") {
    Rng rng(5);
    const int n = 20'000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian(2.0, 0.5);
        sum += g;
        sq += g * g;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(mean == doctest::Approx(2.0).epsilon(0.02));
    CHECK(std::sqrt(var) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("shuffle permutes and is seeded") {
    std::vector<int> v(20);
    std::iota(v.begin(), v.end(), 0);
    std::vector<int> w = v;
    Rng a(11), b(11);
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);  // same seed, same permutation
    std::vector<int> sorted_back = v;
    std::sort(sorted_back.begin(), sorted_back.end());
    std::vector<int> expect(20);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(sorted_back == expect);

    Rng c(12);
    std::vector<int> u(20);
    std::iota(u.begin(), u.end(), 0);
    c.shuffle(u);
    CHECK(u != v);  // different seed, different order (20! makes collision absurd)
}

TEST_CASE("uniform tensor factory fills the requested range") {
    Rng rng(3);
    Tensor t = Tensor::uniform({4, 5, 5}, rng, -0.2, 0.2);
    CHECK(t.numel() == 100);
    CHECK(t.all_in_range(-0.2, 0.2));
    CHECK(t.min_value() < 0.0);
    CHECK(t.max_value() > 0.0);
}
