#include "sowreap/order.hpp"

#include <cmath>
#include <numeric>

#include "sowreap/error.hpp"
#include "sowreap/syntax.hpp"

namespace sowreap {

std::string_view to_string(OrderPreference o) { return o == OrderPreference::Monotone ? "MONOTONE" : "FLIP"; }

OrderPreference parse_order_preference(std::string_view s) {
  if (s == "MONOTONE" || s == "monotone") return OrderPreference::Monotone;
  if (s == "FLIP" || s == "flip") return OrderPreference::Flip;
  throw FormatError("unknown order preference '" + std::string(s) + "'");
}

std::vector<double> sinusoidal_embedding(int position, int dim) {
  SOWREAP_REQUIRE(dim > 0 && dim % 2 == 0, "sinusoidal_embedding: dim must be even");
  SOWREAP_REQUIRE(position >= 0, "sinusoidal_embedding: position must be non-negative");
  std::vector<double> out(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim / 2; ++i) {
    const double angle = position / std::pow(10000.0, 2.0 * i / dim);
    out[static_cast<std::size_t>(2 * i)] = std::sin(angle);
    out[static_cast<std::size_t>(2 * i + 1)] = std::cos(angle);
  }
  return out;
}

OrderPositions order_preference_positions(std::span<const char> is_nonterminal, OrderPreference o) {
  std::vector<int> where;
  for (std::size_t i = 0; i < is_nonterminal.size(); ++i)
    if (is_nonterminal[i]) where.push_back(static_cast<int>(i));
  SOWREAP_REQUIRE(where.size() == 2, "order_preference_positions: need exactly two non-terminals");
  OrderPositions out{std::vector<int>(is_nonterminal.size(), 0)};
  const bool mono = o == OrderPreference::Monotone;
  out.positions[static_cast<std::size_t>(where[0])] = mono ? 1 : 2;
  out.positions[static_cast<std::size_t>(where[1])] = mono ? 2 : 1;
  return out;
}

OrderPositions reordering_positions(std::span<const int> perm) {
  return OrderPositions{inverse_permutation(perm)};
}

std::vector<int> expand_to_pieces(std::span<const int> word_positions, std::span<const int> pieces, bool permutation) {
  SOWREAP_REQUIRE(word_positions.size() == pieces.size(), "expand_to_pieces: length mismatch");
  std::vector<int> offsets(pieces.size() + 1, 0);
  for (std::size_t w = 0; w < pieces.size(); ++w) offsets[w + 1] = offsets[w] + pieces[w];
  std::vector<int> out(static_cast<std::size_t>(offsets.back()), 0);
  if (!permutation) {
    for (std::size_t w = 0; w < pieces.size(); ++w)
      for (int p = offsets[w]; p < offsets[w + 1]; ++p) out[static_cast<std::size_t>(p)] = word_positions[w];
    return out;
  }
  // Words visited in target order; pieces of a word stay contiguous.
  std::vector<int> words_in_order(word_positions.size());
  for (std::size_t w = 0; w < word_positions.size(); ++w) {
    const int pos = word_positions[w];
    SOWREAP_REQUIRE(pos >= 1 && pos <= static_cast<int>(word_positions.size()), "expand_to_pieces: not a permutation");
    words_in_order[static_cast<std::size_t>(pos - 1)] = static_cast<int>(w);
  }
  int rank = 0;
  for (int w : words_in_order)
    for (int p = offsets[static_cast<std::size_t>(w)]; p < offsets[static_cast<std::size_t>(w) + 1]; ++p)
      out[static_cast<std::size_t>(p)] = ++rank;
  return out;
}

}  // namespace sowreap
