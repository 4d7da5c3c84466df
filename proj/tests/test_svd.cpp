#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "laplab/svd.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace laplab;
using laplab::testing::gram_oracle;

TEST_CASE("singular values match the Gram-eigenvalue oracle") {
    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Matrix m(1 + rng.below(32), 1 + rng.below(32));
        for (auto& v : m.data) v = rng.normal();
        const auto got = singular_values(m);
        const auto want = gram_oracle(m);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            const double err = std::abs(got[i] - want[i]) / want[i];
            worst = std::max(worst, err);
            CHECK(err <= 1e-8);
        }
        CHECK(std::is_sorted(got.rbegin(), got.rend()));
    }
    MESSAGE("worst relative deviation: " << worst);
}

TEST_CASE("singular values of structured matrices") {
    Matrix d(3, 3);
    d(0, 0) = -2.0, d(1, 1) = 5.0, d(2, 2) = 0.5;
    CHECK(singular_values(d) == std::vector<double>{5.0, 2.0, 0.5});

    // Rank one: u v^T has a single nonzero value |u| |v|.
    Matrix r(4, 3);
    const double u[] = {1, 2, 2, 0}, v[] = {3, 0, 4};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) r(i, j) = u[i] * v[j];
    const auto s = singular_values(r);
    REQUIRE(s.size() == 3);
    CHECK(s[0] == doctest::Approx(15.0).epsilon(1e-14));
    CHECK(std::abs(s[1]) <= 1e-13);
    CHECK(std::abs(s[2]) <= 1e-13);

    Matrix z(2, 5);
    CHECK(singular_values(z) == std::vector<double>{0.0, 0.0});
    CHECK(singular_values(r) == singular_values(r.transposed()));
}
