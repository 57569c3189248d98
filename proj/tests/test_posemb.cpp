#include <doctest.h>

#include <cmath>

#include "denseil/posemb.hpp"
#include "support.hpp"

using namespace denseil;
using namespace denseil::testing;

TEST_SUITE("posemb") {

TEST_CASE("spatial entries match direct evaluation") {
  for (int d : {2, 3, 8, 17, 64}) {
    const Tensor s = spatial_pos(6, d);
    REQUIRE(s.shape() == Shape{6, static_cast<std::size_t>(d)});
    for (int p = 1; p <= 6; ++p) {
      for (int j = 1; j <= d; ++j) {
        const double v = s.at({static_cast<std::size_t>(p - 1), static_cast<std::size_t>(j - 1)});
        CHECK(std::fabs(v - sinusoid_oracle(p, j, d)) <= 1e-12);
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
      }
    }
  }
}

TEST_CASE("spot values") {
  const Tensor s = spatial_pos(2, 4);
  // j = 1 is odd -> cos(1 / 10000^(1/4)) = cos(0.1)
  CHECK(s.at({0, 0}) == doctest::Approx(std::cos(0.1)).epsilon(1e-14));
  // j = 2 is even -> sin(2 / 10000^(1/2)) = sin(0.02)
  CHECK(s.at({1, 1}) == doctest::Approx(std::sin(0.02)).epsilon(1e-14));
  // j = 4 = d -> sin(1 / 10000)
  CHECK(s.at({0, 3}) == doctest::Approx(std::sin(1e-4)).epsilon(1e-14));
}

TEST_CASE("temporal and spatial tables share their form") {
  for (int n : {1, 5, 16}) {
    const Tensor a = temporal_pos(n, 10), b = spatial_pos(n, 10);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.values()[i] == b.values()[i]);
  }
}

TEST_CASE("combined rows are spatial plus temporal") {
  const auto t = step_emb(5, 3, 8);
  REQUIRE(t->combined.shape() == Shape{15, 8});
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t p = 0; p < 3; ++p) {
      for (std::size_t j = 0; j < 8; ++j) {
        CHECK(t->combined.at({i * 3 + p, j}) == t->spatial.at({p, j}) + t->temporal.at({i, j}));
      }
    }
  }
  // Additivity: combined - spatial is the same for every part of a frame.
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      const double r0 = t->combined.at({i * 3, j}) - t->spatial.at({0, j});
      for (std::size_t p = 1; p < 3; ++p) {
        CHECK(t->combined.at({i * 3 + p, j}) - t->spatial.at({p, j}) ==
              doctest::Approx(r0).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("tables are cached and deterministic") {
  const auto a = step_emb(4, 2, 6), b = step_emb(4, 2, 6);
  CHECK(a.get() == b.get());
  const auto c = step_emb(4, 3, 6);
  CHECK(c.get() != a.get());
  const Tensor fresh = spatial_pos(2, 6);
  for (std::size_t i = 0; i < fresh.numel(); ++i) CHECK(a->spatial.values()[i] == fresh.values()[i]);
}

TEST_CASE("combined rows are distinct unless their index pairs are swapped") {
  for (int d : {8, 16, 64}) {
    const auto t = step_emb(16, 8, d);
    double closest = 1e9;
    for (std::size_t a = 0; a < 128; ++a) {
      for (std::size_t b = a + 1; b < 128; ++b) {
        const std::size_t ia = a / 8 + 1, pa = a % 8 + 1, ib = b / 8 + 1, pb = b % 8 + 1;
        double m = 0.0;
        for (std::size_t j = 0; j < static_cast<std::size_t>(d); ++j) {
          m = std::max(m, std::fabs(t->combined.at({a, j}) - t->combined.at({b, j})));
        }
        if (ia == pb && pa == ib) {
          // Both tables share one formula, so e(i,p) == e(p,i).
          CHECK(m <= 1e-15);
        } else {
          closest = std::min(closest, m);
        }
      }
    }
    CHECK(closest > 1e-6);
  }
}

TEST_CASE("errors") {
  CHECK_THROWS(spatial_pos(3, 1));
  CHECK_THROWS(temporal_pos(3, 0));
  CHECK_THROWS(spatial_pos(0, 4));
  CHECK_THROWS(step_emb(2, 2, 1));
}

}  // TEST_SUITE
