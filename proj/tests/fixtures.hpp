#pragma once
// Shared inputs and brute-force reference implementations for the tests.

#include <cmath>
#include <map>
#include <regex>
#include <string>
#include <vector>

#include "sowreap/syntax.hpp"

namespace fixtures {

// "if at any time in the preparation of this product the integrity of this
// container is compromised it should not be used ."
inline const std::string kConditional =
    "(S (SBAR (IN if) (S (PP (IN at) (NP (NP (DT any) (NN time)) (PP (IN in) (NP (NP (DT the) (NN preparation)) "
    "(PP (IN of) (NP (DT this) (NN product))))))) (NP (NP (DT the) (NN integrity)) (PP (IN of) (NP (DT this) "
    "(NN container)))) (VP (VBZ is) (VP (VBN compromised))))) (NP (PRP it)) (VP (MD should) (RB not) (VP (VB be) "
    "(VP (VBN used)))) (. .))";

// Words of a bracketing by pattern matching "(TAG word)" pairs, independent of
// the parser.
inline std::vector<std::string> bracket_words(const std::string& ptb) {
  static const std::regex leaf(R"(\(([^\s()]+) ([^\s()]+)\))");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(ptb.begin(), ptb.end(), leaf); it != std::sregex_iterator(); ++it)
    out.push_back((*it)[2].str());
  return out;
}

inline std::vector<int> brute_inverse(const std::vector<int>& p) {
  std::vector<int> inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p.size(); ++j)
      if (p[j] == static_cast<int>(i) + 1) inv[i] = static_cast<int>(j) + 1;
  return inv;
}

inline bool is_perm_of_n(const std::vector<int>& p) {
  std::vector<int> seen(p.size() + 1, 0);
  for (int v : p) {
    if (v < 1 || v > static_cast<int>(p.size()) || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

inline std::vector<std::string> words(const std::string& s) { return sowreap::split_whitespace(s); }

}  // namespace fixtures
