#pragma once
// Brute-force metric implementations: n-gram counting and quadratic DPs.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sowreap/metrics.hpp"
#include "sowreap/rng.hpp"

namespace oracles {

using sowreap::Rng;
using sowreap::Tokens;

inline std::map<std::string, int> grams(const Tokens& s, int n) {
  std::map<std::string, int> out;
  for (int i = 0; i + n <= static_cast<int>(s.size()); ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) key += s[static_cast<std::size_t>(i + k)] + "\x1f";
    ++out[key];
  }
  return out;
}

// Reference BLEU: plain products instead of log sums.
inline double ref_bleu(const Tokens& c, const Tokens& r) {
  if (c.empty() || r.empty()) return 0.0;
  double prod = 1.0;
  for (int n = 1; n <= 4; ++n) {
    const auto cg = grams(c, n), rg = grams(r, n);
    int m = 0, t = 0;
    for (const auto& [g, k] : cg) {
      t += k;
      if (rg.count(g)) m += std::min(k, rg.at(g));
    }
    if (n == 1 && m == 0) return 0.0;
    prod *= n == 1 ? static_cast<double>(m) / t : (m + 1.0) / (t + 1.0);
  }
  const double bp = c.size() >= r.size() ? 1.0 : std::exp(1.0 - static_cast<double>(r.size()) / c.size());
  return bp * std::pow(prod, 0.25);
}

inline std::size_t ref_lcs(const Tokens& a, const Tokens& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
  return t[a.size()][b.size()];
}

inline std::size_t ref_edit(const Tokens& a, const Tokens& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 0; i <= a.size(); ++i) t[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) t[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      t[i][j] = std::min({t[i - 1][j] + 1, t[i][j - 1] + 1, t[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
  return t[a.size()][b.size()];
}

inline double ref_rouge_n(const Tokens& c, const Tokens& r, int n) {
  const auto cg = grams(c, n), rg = grams(r, n);
  int m = 0, t = 0;
  for (const auto& [g, k] : rg) {
    t += k;
    if (cg.count(g)) m += std::min(k, cg.at(g));
  }
  return t == 0 ? 0.0 : static_cast<double>(m) / t;
}

inline Tokens random_tokens(Rng& rng, int max_len, int vocab) {
  Tokens t(rng.below(static_cast<std::uint64_t>(max_len) + 1));
  for (auto& w : t) w = "w" + std::to_string(rng.below(static_cast<std::uint64_t>(vocab)));
  return t;
}

}  // namespace oracles
