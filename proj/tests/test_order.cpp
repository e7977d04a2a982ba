#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "sowreap/error.hpp"
#include "sowreap/order.hpp"
#include "sowreap/rng.hpp"

using namespace sowreap;

TEST_CASE("sinusoidal_embedding: position 0 alternates 0 and 1") {
  const auto v = sinusoidal_embedding(0, 8);
  for (int i = 0; i < 8; ++i) CHECK(v[static_cast<std::size_t>(i)] == (i % 2 == 0 ? 0.0 : 1.0));
}

TEST_CASE("sinusoidal_embedding: position 1, dim 4") {
  const auto v = sinusoidal_embedding(1, 4);
  // Reference values evaluated to 16 digits offline.
  CHECK(v[0] == doctest::Approx(0.8414709848078965).epsilon(1e-15));
  CHECK(v[1] == doctest::Approx(0.5403023058681398).epsilon(1e-15));
  CHECK(v[2] == doctest::Approx(0.009999833334166665).epsilon(1e-15));
  CHECK(v[3] == doctest::Approx(0.9999500004166653).epsilon(1e-15));
}

TEST_CASE("sinusoidal_embedding: distinct rows up to 512") {
  for (int dim : {8, 64}) {
    std::vector<std::vector<double>> rows;
    for (int p = 0; p < 512; ++p) rows.push_back(sinusoidal_embedding(p, dim));
    int collisions = 0;
    for (int a = 0; a < 512; ++a)
      for (int b = a + 1; b < 512; ++b) {
        double d = 0;
        for (int i = 0; i < dim; ++i) d = std::max(d, std::abs(rows[a][i] - rows[b][i]));
        if (d < 1e-9) ++collisions;
      }
    CHECK(collisions == 0);
  }
}

TEST_CASE("sinusoidal_embedding: odd dimension") {
  CHECK_THROWS_AS(sinusoidal_embedding(1, 5), ContractViolation);
  CHECK_THROWS_AS(sinusoidal_embedding(-1, 4), ContractViolation);
}

TEST_CASE("order_preference_positions") {
  // "If S I will VP": non-terminals at positions 2 and 5.
  const std::vector<char> nt = {0, 1, 0, 0, 1};
  CHECK(order_preference_positions(nt, OrderPreference::Monotone).positions == std::vector<int>{0, 1, 0, 0, 2});
  CHECK(order_preference_positions(nt, OrderPreference::Flip).positions == std::vector<int>{0, 2, 0, 0, 1});
  CHECK(order_preference_positions(std::vector<char>{1, 1}, OrderPreference::Monotone).positions ==
        std::vector<int>{1, 2});
  CHECK_THROWS_AS(order_preference_positions(std::vector<char>{1, 0, 0}, OrderPreference::Flip), ContractViolation);
  CHECK_THROWS_AS(order_preference_positions(std::vector<char>{1, 1, 1}, OrderPreference::Flip), ContractViolation);
}

TEST_CASE("order preference names") {
  CHECK(to_string(OrderPreference::Flip) == "FLIP");
  CHECK(parse_order_preference("MONOTONE") == OrderPreference::Monotone);
  CHECK_THROWS_AS(parse_order_preference("SWAP"), FormatError);
}

TEST_CASE("reordering_positions: slot of each source token") {
  // Output order d e a b c: token 1 (a) lands in slot 3.
  CHECK(reordering_positions(std::vector<int>{4, 5, 1, 2, 3}).positions == std::vector<int>{3, 4, 5, 1, 2});
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = identity_permutation(1 + static_cast<int>(rng.below(10)));
    shuffle(p.begin(), p.end(), rng);
    CHECK(reordering_positions(p).positions == fixtures::brute_inverse(p));
  }
}

TEST_CASE("expand_to_pieces") {
  // Words: w1 (2 pieces), w2 (1), w3 (3); target order w3 w1 w2.
  const std::vector<int> pos = {2, 3, 1};
  const std::vector<int> pieces = {2, 1, 3};
  CHECK(expand_to_pieces(pos, pieces, true) == std::vector<int>{4, 5, 6, 1, 2, 3});
  CHECK(expand_to_pieces(std::vector<int>{0, 2, 1}, pieces, false) == std::vector<int>{0, 0, 2, 1, 1, 1});
  CHECK(expand_to_pieces(std::vector<int>{1, 2, 3}, std::vector<int>{1, 1, 1}, true) == std::vector<int>{1, 2, 3});
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(8));
    auto p = identity_permutation(n);
    shuffle(p.begin(), p.end(), rng);
    std::vector<int> pc;
    for (int i = 0; i < n; ++i) pc.push_back(1 + static_cast<int>(rng.below(3)));
    CHECK(fixtures::is_perm_of_n(expand_to_pieces(p, pc, true)));
  }
}
