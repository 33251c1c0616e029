#include <doctest.h>

#include <cmath>
#include <set>

#include "dualmpc/rng.hpp"

using namespace dualmpc;

TEST_CASE("philox known-answer vectors") {
  // Published Random123 test vectors for philox4x32-10.
  auto z = philox4x32_10({0, 0, 0, 0}, {0, 0});
  CHECK(z[0] == 0x6627e8d5u);
  CHECK(z[1] == 0xe169c58du);
  CHECK(z[2] == 0xbc57ac4cu);
  CHECK(z[3] == 0x9b00dbd8u);

  auto f = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                         {0xffffffffu, 0xffffffffu});
  CHECK(f[0] == 0x408f276du);
  CHECK(f[1] == 0x41c83b0eu);
  CHECK(f[2] == 0xa20bc7c6u);
  CHECK(f[3] == 0x6d5451fdu);

  auto p = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                         {0xa4093822u, 0x299f31d0u});
  CHECK(p[0] == 0xd16cfe09u);
  CHECK(p[1] == 0x94fdccebu);
  CHECK(p[2] == 0x5001e420u);
  CHECK(p[3] == 0x24126ea1u);
}

TEST_CASE("streams are reproducible and distinct") {
  Rng a(42, 7), b(42, 7), c(42, 8);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    if (va != c.next_u64()) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("uniform lies in [0,1) and normal moments are sane") {
  Rng r(1, 0);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("trial streams do not depend on other trials") {
  Rng t3 = trial_rng(99, 3, 0);
  Rng t3b = trial_rng(99, 3, 0);
  Rng t4 = trial_rng(99, 4, 0);
  CHECK(t3.next_u64() == t3b.next_u64());
  CHECK(t3.next_u64() != t4.next_u64());
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 50; ++i) seen.insert(trial_rng(5, i, 1).next_u64());
  CHECK(seen.size() == 50);
}
