#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sowreap {

enum class OrderPreference { Monotone, Flip };

std::string_view to_string(OrderPreference o);
OrderPreference parse_order_preference(std::string_view s);

/// Per-source-token order positions added to the encoder output. For REAP
/// these form a permutation of 1..n; for SOW they are zero except at the two
/// abstracted non-terminals.
struct OrderPositions {
  std::vector<int> positions;
};

/// PE(pos, 2i) = sin(pos / 10000^(2i/dim)), PE(pos, 2i+1) = cos(same).
std::vector<double> sinusoidal_embedding(int position, int dim);

/// (1, 2) on the two non-terminals in surface order for MONOTONE, (2, 1) for FLIP.
OrderPositions order_preference_positions(std::span<const char> is_nonterminal, OrderPreference o);

/// Target position of each source token under a reordering: position[i] is
/// the 1-based slot at which source token i+1 appears in `perm`.
OrderPositions reordering_positions(std::span<const int> perm);

/// Expands word-level order positions to subword pieces. `pieces[w]` is the
/// number of pieces of word w. For permutation orders the pieces are ranked
/// so the result is again a permutation; zero positions stay zero and
/// non-zero SOW markers are copied to every piece.
std::vector<int> expand_to_pieces(std::span<const int> word_positions, std::span<const int> pieces, bool permutation);

}  // namespace sowreap
