#pragma once

// Reverse-mode automatic differentiation over row-major matrices.
//
// A Graph records nodes in creation order; backward() walks them in reverse.
// The op set is the minimum a small encoder-decoder transformer needs:
// matmul/linear, add, relu, layer norm, dropout, embedding gather, masked
// multi-head attention (probabilities and context as separate nodes so that
// losses can read the attention distribution), cross entropy and coverage.

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sowreap/error.hpp"
#include "sowreap/rng.hpp"

namespace sowreap::nn {

template <typename T>
struct Parameter {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, int r, int c)
      : name(std::move(n)), rows(r), cols(c), value(static_cast<std::size_t>(r) * c, T(0)),
        grad(static_cast<std::size_t>(r) * c, T(0)) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Shape bookkeeping for batched multi-head attention. Rows of the query
/// matrix are laid out as b * q_len + i; rows of the key matrix as b * k_len + j;
/// rows of the probability matrix as (b * heads + h) * q_len + i.
struct AttentionShape {
  int batch = 1;
  int heads = 1;
  int q_len = 1;
  int k_len = 1;
};

template <typename T>
class Graph {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapM = Eigen::Map<Mat>;
  using CMapM = Eigen::Map<const Mat>;

  /// With record=false no backward closures are kept (inference).
  explicit Graph(bool record = true) : record_(record) { nodes_.reserve(256); }

  bool recording() const { return record_; }

  Var input(int rows, int cols, std::vector<T> data) {
    SOWREAP_REQUIRE(data.size() == static_cast<std::size_t>(rows) * cols, "input: data size mismatch");
    Var v = make(rows, cols, false);
    nodes_[v.id].value = std::move(data);
    return v;
  }

  /// Only recording graphs write into p.grad (during backward); callers that
  /// record must own the parameter mutably.
  Var param(const Parameter<T>& p) {
    Var v = make(p.rows, p.cols, record_);
    nodes_[v.id].value = p.value;
    if (record_) nodes_[v.id].param = const_cast<Parameter<T>*>(&p);
    return v;
  }

  int rows(Var v) const { return nodes_[v.id].rows; }
  int cols(Var v) const { return nodes_[v.id].cols; }
  const std::vector<T>& value(Var v) const { return nodes_[v.id].value; }
  std::vector<T>& mutable_value(Var v) { return nodes_[v.id].value; }
  const std::vector<T>& grad(Var v) const { return nodes_[v.id].grad; }
  T scalar(Var v) const { return nodes_[v.id].value.at(0); }

  // ---------------------------------------------------------------- ops

  Var matmul(Var a, Var b) {
    const int m = rows(a), k = cols(a), n = cols(b);
    SOWREAP_REQUIRE(rows(b) == k, "matmul: inner dimension mismatch");
    Var c = make(m, n, needs(a) || needs(b));
    map(c).noalias() = cmap(a) * cmap(b);
    if (tracking(c)) {
      nodes_[c.id].back = [this, a, b, c]() {
        if (needs(a)) gmap(a).noalias() += gmap_c(c) * cmap(b).transpose();
        if (needs(b)) gmap(b).noalias() += cmap(a).transpose() * gmap_c(c);
      };
    }
    return c;
  }

  /// x[m,k] * w[k,n] + bias[1,n]
  Var linear(Var x, Var w, Var bias) {
    const int m = rows(x), k = cols(x), n = cols(w);
    SOWREAP_REQUIRE(rows(w) == k && rows(bias) == 1 && cols(bias) == n, "linear: shape mismatch");
    Var y = make(m, n, needs(x) || needs(w) || needs(bias));
    auto ym = map(y);
    ym.noalias() = cmap(x) * cmap(w);
    ym.rowwise() += cmap(bias).row(0);
    if (tracking(y)) {
      nodes_[y.id].back = [this, x, w, bias, y]() {
        if (needs(x)) gmap(x).noalias() += gmap_c(y) * cmap(w).transpose();
        if (needs(w)) gmap(w).noalias() += cmap(x).transpose() * gmap_c(y);
        // Row by row: Eigen's vectorised column sum depends on buffer alignment.
        if (needs(bias)) {
          auto gb = gmap(bias).row(0);
          const auto gy = gmap_c(y);
          for (int r = 0; r < gy.rows(); ++r) gb += gy.row(r);
        }
      };
    }
    return y;
  }

  Var add(Var a, Var b) {
    SOWREAP_REQUIRE(rows(a) == rows(b) && cols(a) == cols(b), "add: shape mismatch");
    Var c = make(rows(a), cols(a), needs(a) || needs(b));
    map(c) = cmap(a) + cmap(b);
    if (tracking(c)) {
      nodes_[c.id].back = [this, a, b, c]() {
        if (needs(a)) gmap(a) += gmap_c(c);
        if (needs(b)) gmap(b) += gmap_c(c);
      };
    }
    return c;
  }

  Var scale(Var a, T s) {
    Var c = make(rows(a), cols(a), needs(a));
    map(c) = cmap(a) * s;
    if (tracking(c)) {
      nodes_[c.id].back = [this, a, c, s]() { gmap(a) += gmap_c(c) * s; };
    }
    return c;
  }

  Var relu(Var a) {
    Var c = make(rows(a), cols(a), needs(a));
    map(c) = cmap(a).cwiseMax(T(0));
    if (tracking(c)) {
      nodes_[c.id].back = [this, a, c]() {
        auto& av = nodes_[a.id].value;
        auto& ag = nodes_[a.id].grad;
        const auto& cg = nodes_[c.id].grad;
        for (std::size_t i = 0; i < av.size(); ++i)
          if (av[i] > T(0)) ag[i] += cg[i];
      };
    }
    return c;
  }

  /// Row-wise layer normalisation with learned gain and bias ([1,n] each).
  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5)) {
    const int m = rows(x), n = cols(x);
    SOWREAP_REQUIRE(cols(gain) == n && cols(bias) == n, "layer_norm: shape mismatch");
    Var y = make(m, n, needs(x) || needs(gain) || needs(bias));
    std::vector<T> xhat(static_cast<std::size_t>(m) * n);
    std::vector<T> rstd(static_cast<std::size_t>(m));
    const auto& xv = nodes_[x.id].value;
    const auto& g = nodes_[gain.id].value;
    const auto& b = nodes_[bias.id].value;
    auto& yv = nodes_[y.id].value;
    for (int r = 0; r < m; ++r) {
      const T* row = &xv[static_cast<std::size_t>(r) * n];
      T mean = 0;
      for (int j = 0; j < n; ++j) mean += row[j];
      mean /= n;
      T var = 0;
      for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
      var /= n;
      const T rs = T(1) / std::sqrt(var + eps);
      rstd[static_cast<std::size_t>(r)] = rs;
      for (int j = 0; j < n; ++j) {
        const std::size_t idx = static_cast<std::size_t>(r) * n + j;
        xhat[idx] = (row[j] - mean) * rs;
        yv[idx] = g[static_cast<std::size_t>(j)] * xhat[idx] + b[static_cast<std::size_t>(j)];
      }
    }
    if (tracking(y)) {
      nodes_[y.id].back = [this, x, gain, bias, y, m, n, xhat = std::move(xhat), rstd = std::move(rstd)]() {
        const auto& dy = nodes_[y.id].grad;
        const auto& g = nodes_[gain.id].value;
        std::vector<T> dxhat(static_cast<std::size_t>(n));
        for (int r = 0; r < m; ++r) {
          T mean_d = 0, mean_dx = 0;
          for (int j = 0; j < n; ++j) {
            const std::size_t idx = static_cast<std::size_t>(r) * n + j;
            dxhat[static_cast<std::size_t>(j)] = dy[idx] * g[static_cast<std::size_t>(j)];
            mean_d += dxhat[static_cast<std::size_t>(j)];
            mean_dx += dxhat[static_cast<std::size_t>(j)] * xhat[idx];
            if (needs(gain)) nodes_[gain.id].grad[static_cast<std::size_t>(j)] += dy[idx] * xhat[idx];
            if (needs(bias)) nodes_[bias.id].grad[static_cast<std::size_t>(j)] += dy[idx];
          }
          if (!needs(x)) continue;
          mean_d /= n;
          mean_dx /= n;
          const T rs = rstd[static_cast<std::size_t>(r)];
          for (int j = 0; j < n; ++j) {
            const std::size_t idx = static_cast<std::size_t>(r) * n + j;
            nodes_[x.id].grad[idx] += rs * (dxhat[static_cast<std::size_t>(j)] - mean_d - xhat[idx] * mean_dx);
          }
        }
      };
    }
    return y;
  }

  /// Inverted dropout; identity when p == 0 or no generator is given.
  Var dropout(Var x, double p, Rng* rng) {
    if (p <= 0.0 || rng == nullptr) return x;
    SOWREAP_REQUIRE(p < 1.0, "dropout: p must be < 1");
    const std::size_t size = nodes_[x.id].value.size();
    std::vector<T> mask(size);
    const T keep = T(1) / T(1.0 - p);
    for (auto& v : mask) v = rng->uniform() < p ? T(0) : keep;
    Var y = make(rows(x), cols(x), needs(x));
    const auto& xv = nodes_[x.id].value;
    auto& yv = nodes_[y.id].value;
    for (std::size_t i = 0; i < size; ++i) yv[i] = xv[i] * mask[i];
    if (tracking(y)) {
      nodes_[y.id].back = [this, x, y, mask = std::move(mask)]() {
        auto& xg = nodes_[x.id].grad;
        const auto& yg = nodes_[y.id].grad;
        for (std::size_t i = 0; i < mask.size(); ++i) xg[i] += yg[i] * mask[i];
      };
    }
    return y;
  }

  /// Gathers rows of `table` ([V,H]) for each id.
  Var embedding(Var table, std::span<const int> ids) {
    const int n = cols(table);
    const int vocab = rows(table);
    Var y = make(static_cast<int>(ids.size()), n, needs(table));
    const auto& tv = nodes_[table.id].value;
    auto& yv = nodes_[y.id].value;
    std::vector<int> idv(ids.begin(), ids.end());
    for (std::size_t r = 0; r < idv.size(); ++r) {
      SOWREAP_REQUIRE(idv[r] >= 0 && idv[r] < vocab, "embedding: id out of range");
      std::copy_n(&tv[static_cast<std::size_t>(idv[r]) * n], n, &yv[r * n]);
    }
    if (tracking(y)) {
      nodes_[y.id].back = [this, table, y, n, idv = std::move(idv)]() {
        auto& tg = nodes_[table.id].grad;
        const auto& yg = nodes_[y.id].grad;
        for (std::size_t r = 0; r < idv.size(); ++r) {
          T* dst = &tg[static_cast<std::size_t>(idv[r]) * n];
          const T* src = &yg[r * n];
          for (int j = 0; j < n; ++j) dst[j] += src[j];
        }
      };
    }
    return y;
  }

  /// Softmax(QK^T / sqrt(d_head)) per batch element and head. `key_valid`
  /// has batch * k_len entries; masked keys get probability exactly zero.
  /// With `causal`, query i only sees keys j <= i.
  Var attention_probs(Var q, Var k, const AttentionShape& s, std::span<const char> key_valid, bool causal) {
    const int hidden = cols(q);
    SOWREAP_REQUIRE(hidden % s.heads == 0, "attention: hidden not divisible by heads");
    SOWREAP_REQUIRE(rows(q) == s.batch * s.q_len && rows(k) == s.batch * s.k_len && cols(k) == hidden,
                    "attention: shape mismatch");
    SOWREAP_REQUIRE(key_valid.size() == static_cast<std::size_t>(s.batch) * s.k_len, "attention: mask size");
    const int dh = hidden / s.heads;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
    Var p = make(s.batch * s.heads * s.q_len, s.k_len, needs(q) || needs(k));
    const auto& qv = nodes_[q.id].value;
    const auto& kv = nodes_[k.id].value;
    auto& pv = nodes_[p.id].value;
    std::vector<char> mask(key_valid.begin(), key_valid.end());
    std::vector<T> scores(static_cast<std::size_t>(s.k_len));
    for (int b = 0; b < s.batch; ++b) {
      for (int h = 0; h < s.heads; ++h) {
        for (int i = 0; i < s.q_len; ++i) {
          const T* qrow = &qv[static_cast<std::size_t>(b * s.q_len + i) * hidden + h * dh];
          T* prow = &pv[static_cast<std::size_t>((b * s.heads + h) * s.q_len + i) * s.k_len];
          T mx = -std::numeric_limits<T>::infinity();
          for (int j = 0; j < s.k_len; ++j) {
            if (!visible(mask, s, b, i, j, causal)) continue;
            const T* krow = &kv[static_cast<std::size_t>(b * s.k_len + j) * hidden + h * dh];
            T acc = 0;
            for (int d = 0; d < dh; ++d) acc += qrow[d] * krow[d];
            scores[static_cast<std::size_t>(j)] = acc * inv_sqrt;
            mx = std::max(mx, scores[static_cast<std::size_t>(j)]);
          }
          if (mx == -std::numeric_limits<T>::infinity()) continue;  // fully masked row stays zero
          T z = 0;
          for (int j = 0; j < s.k_len; ++j) {
            if (!visible(mask, s, b, i, j, causal)) continue;
            prow[j] = std::exp(scores[static_cast<std::size_t>(j)] - mx);
            z += prow[j];
          }
          for (int j = 0; j < s.k_len; ++j) prow[j] /= z;
        }
      }
    }
    if (tracking(p)) {
      nodes_[p.id].back = [this, q, k, p, s, dh, inv_sqrt, hidden]() {
        const auto& qv = nodes_[q.id].value;
        const auto& kv = nodes_[k.id].value;
        const auto& pv = nodes_[p.id].value;
        const auto& pg = nodes_[p.id].grad;
        std::vector<T> ds(static_cast<std::size_t>(s.k_len));
        for (int b = 0; b < s.batch; ++b) {
          for (int h = 0; h < s.heads; ++h) {
            for (int i = 0; i < s.q_len; ++i) {
              const std::size_t prow = static_cast<std::size_t>((b * s.heads + h) * s.q_len + i) * s.k_len;
              T dot = 0;
              for (int j = 0; j < s.k_len; ++j) dot += pg[prow + j] * pv[prow + j];
              for (int j = 0; j < s.k_len; ++j)
                ds[static_cast<std::size_t>(j)] = pv[prow + j] * (pg[prow + j] - dot) * inv_sqrt;
              const std::size_t qoff = static_cast<std::size_t>(b * s.q_len + i) * hidden + h * dh;
              for (int j = 0; j < s.k_len; ++j) {
                const T d = ds[static_cast<std::size_t>(j)];
                if (d == T(0)) continue;
                const std::size_t koff = static_cast<std::size_t>(b * s.k_len + j) * hidden + h * dh;
                if (needs(q))
                  for (int e = 0; e < dh; ++e) nodes_[q.id].grad[qoff + e] += d * kv[koff + e];
                if (needs(k))
                  for (int e = 0; e < dh; ++e) nodes_[k.id].grad[koff + e] += d * qv[qoff + e];
              }
            }
          }
        }
      };
    }
    return p;
  }

  /// Weighted sum of value rows per head: out[b*q_len+i, h*dh:(h+1)*dh].
  Var attention_context(Var p, Var v, const AttentionShape& s) {
    const int hidden = cols(v);
    const int dh = hidden / s.heads;
    SOWREAP_REQUIRE(rows(p) == s.batch * s.heads * s.q_len && cols(p) == s.k_len && rows(v) == s.batch * s.k_len,
                    "attention_context: shape mismatch");
    Var out = make(s.batch * s.q_len, hidden, needs(p) || needs(v));
    const auto& pv = nodes_[p.id].value;
    const auto& vv = nodes_[v.id].value;
    auto& ov = nodes_[out.id].value;
    for (int b = 0; b < s.batch; ++b)
      for (int h = 0; h < s.heads; ++h)
        for (int i = 0; i < s.q_len; ++i) {
          const std::size_t prow = static_cast<std::size_t>((b * s.heads + h) * s.q_len + i) * s.k_len;
          T* orow = &ov[static_cast<std::size_t>(b * s.q_len + i) * hidden + h * dh];
          for (int j = 0; j < s.k_len; ++j) {
            const T w = pv[prow + j];
            if (w == T(0)) continue;
            const T* vrow = &vv[static_cast<std::size_t>(b * s.k_len + j) * hidden + h * dh];
            for (int e = 0; e < dh; ++e) orow[e] += w * vrow[e];
          }
        }
    if (tracking(out)) {
      nodes_[out.id].back = [this, p, v, out, s, dh, hidden]() {
        const auto& pv = nodes_[p.id].value;
        const auto& vv = nodes_[v.id].value;
        const auto& og = nodes_[out.id].grad;
        for (int b = 0; b < s.batch; ++b)
          for (int h = 0; h < s.heads; ++h)
            for (int i = 0; i < s.q_len; ++i) {
              const std::size_t prow = static_cast<std::size_t>((b * s.heads + h) * s.q_len + i) * s.k_len;
              const T* grow = &og[static_cast<std::size_t>(b * s.q_len + i) * hidden + h * dh];
              for (int j = 0; j < s.k_len; ++j) {
                const std::size_t voff = static_cast<std::size_t>(b * s.k_len + j) * hidden + h * dh;
                if (needs(p)) {
                  T acc = 0;
                  for (int e = 0; e < dh; ++e) acc += grow[e] * vv[voff + e];
                  nodes_[p.id].grad[prow + j] += acc;
                }
                if (needs(v)) {
                  const T w = pv[prow + j];
                  if (w == T(0)) continue;
                  for (int e = 0; e < dh; ++e) nodes_[v.id].grad[voff + e] += w * grow[e];
                }
              }
            }
      };
    }
    return out;
  }

  /// Summed negative log-likelihood of `targets` under row-wise softmax of
  /// `logits`. Rows with target < 0 are ignored. Returns a [1,1] node; if
  /// `row_nll` is given it receives the per-row values (0 for ignored rows).
  Var cross_entropy_sum(Var logits, std::span<const int> targets, std::vector<T>* row_nll = nullptr) {
    const int m = rows(logits), v = cols(logits);
    SOWREAP_REQUIRE(targets.size() == static_cast<std::size_t>(m), "cross_entropy: target count mismatch");
    Var loss = make(1, 1, needs(logits));
    const auto& lv = nodes_[logits.id].value;
    std::vector<T> probs(tracking(loss) ? lv.size() : 0);
    std::vector<int> tg(targets.begin(), targets.end());
    if (row_nll) row_nll->assign(static_cast<std::size_t>(m), T(0));
    T total = 0;
    for (int r = 0; r < m; ++r) {
      if (tg[static_cast<std::size_t>(r)] < 0) continue;
      SOWREAP_REQUIRE(tg[static_cast<std::size_t>(r)] < v, "cross_entropy: target id out of range");
      const T* row = &lv[static_cast<std::size_t>(r) * v];
      T mx = row[0];
      for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
      T z = 0;
      for (int j = 0; j < v; ++j) z += std::exp(row[j] - mx);
      const T logz = mx + std::log(z);
      const T nll = logz - row[tg[static_cast<std::size_t>(r)]];
      total += nll;
      if (row_nll) (*row_nll)[static_cast<std::size_t>(r)] = nll;
      if (!probs.empty())
        for (int j = 0; j < v; ++j) probs[static_cast<std::size_t>(r) * v + j] = std::exp(row[j] - logz);
    }
    nodes_[loss.id].value[0] = total;
    if (tracking(loss)) {
      nodes_[loss.id].back = [this, logits, loss, v, probs = std::move(probs), tg = std::move(tg)]() {
        const T g = nodes_[loss.id].grad[0];
        auto& lg = nodes_[logits.id].grad;
        for (std::size_t r = 0; r < tg.size(); ++r) {
          if (tg[r] < 0) continue;
          for (int j = 0; j < v; ++j) lg[r * v + j] += g * probs[r * v + j];
          lg[r * v + tg[r]] -= g;
        }
      };
    }
    return loss;
  }

  /// Coverage penalty sum_t sum_i min(a_t,i, c_t,i) with c_t = sum_{t'<t} a_t'
  /// over valid query steps, where a is the head-averaged attention.
  Var coverage_sum(Var p, const AttentionShape& s, std::span<const char> query_valid) {
    SOWREAP_REQUIRE(rows(p) == s.batch * s.heads * s.q_len && cols(p) == s.k_len, "coverage: shape mismatch");
    SOWREAP_REQUIRE(query_valid.size() == static_cast<std::size_t>(s.batch) * s.q_len, "coverage: mask size");
    Var loss = make(1, 1, needs(p));
    const auto& pv = nodes_[p.id].value;
    const std::size_t steps = static_cast<std::size_t>(s.batch) * s.q_len;
    std::vector<T> a(steps * s.k_len, T(0));
    for (int b = 0; b < s.batch; ++b)
      for (int h = 0; h < s.heads; ++h)
        for (int t = 0; t < s.q_len; ++t)
          for (int j = 0; j < s.k_len; ++j)
            a[static_cast<std::size_t>(b * s.q_len + t) * s.k_len + j] +=
                pv[static_cast<std::size_t>((b * s.heads + h) * s.q_len + t) * s.k_len + j] / T(s.heads);
    // picks_a[t,j] = 1 when the min selected a_t,j (else c_t,j).
    std::vector<char> picks_a(steps * s.k_len, 0);
    std::vector<char> valid(query_valid.begin(), query_valid.end());
    T total = 0;
    std::vector<T> cov(static_cast<std::size_t>(s.k_len));
    for (int b = 0; b < s.batch; ++b) {
      std::fill(cov.begin(), cov.end(), T(0));
      for (int t = 0; t < s.q_len; ++t) {
        const std::size_t row = static_cast<std::size_t>(b * s.q_len + t);
        if (!valid[row]) continue;
        for (int j = 0; j < s.k_len; ++j) {
          const T at = a[row * s.k_len + j];
          const T ct = cov[static_cast<std::size_t>(j)];
          if (at <= ct) {
            total += at;
            picks_a[row * s.k_len + j] = 1;
          } else {
            total += ct;
          }
        }
        for (int j = 0; j < s.k_len; ++j) cov[static_cast<std::size_t>(j)] += a[row * s.k_len + j];
      }
    }
    nodes_[loss.id].value[0] = total;
    if (tracking(loss)) {
      nodes_[loss.id].back = [this, p, loss, s, picks_a = std::move(picks_a), valid = std::move(valid)]() {
        const T g = nodes_[loss.id].grad[0];
        std::vector<T> da(static_cast<std::size_t>(s.q_len) * s.k_len);
        std::vector<T> later(static_cast<std::size_t>(s.k_len));
        for (int b = 0; b < s.batch; ++b) {
          std::fill(da.begin(), da.end(), T(0));
          std::fill(later.begin(), later.end(), T(0));
          // Walk backwards: a_t receives the gradient of every later step whose
          // min selected the coverage term.
          for (int t = s.q_len - 1; t >= 0; --t) {
            const std::size_t row = static_cast<std::size_t>(b * s.q_len + t);
            if (!valid[row]) continue;
            for (int j = 0; j < s.k_len; ++j) {
              T d = later[static_cast<std::size_t>(j)];
              if (picks_a[row * s.k_len + j]) d += g;
              da[static_cast<std::size_t>(t) * s.k_len + j] = d;
            }
            for (int j = 0; j < s.k_len; ++j)
              if (!picks_a[row * s.k_len + j]) later[static_cast<std::size_t>(j)] += g;
          }
          for (int h = 0; h < s.heads; ++h)
            for (int t = 0; t < s.q_len; ++t)
              for (int j = 0; j < s.k_len; ++j)
                nodes_[p.id].grad[static_cast<std::size_t>((b * s.heads + h) * s.q_len + t) * s.k_len + j] +=
                    da[static_cast<std::size_t>(t) * s.k_len + j] / T(s.heads);
        }
      };
    }
    return loss;
  }

  /// wa * a + wb * b for [1,1] nodes.
  Var combine(Var a, T wa, Var b, T wb) {
    Var c = make(1, 1, needs(a) || needs(b));
    nodes_[c.id].value[0] = wa * scalar(a) + wb * scalar(b);
    if (tracking(c)) {
      nodes_[c.id].back = [this, a, b, c, wa, wb]() {
        const T g = nodes_[c.id].grad[0];
        if (needs(a)) nodes_[a.id].grad[0] += wa * g;
        if (needs(b)) nodes_[b.id].grad[0] += wb * g;
      };
    }
    return c;
  }

  /// Runs reverse accumulation from a [1,1] node and adds parameter
  /// gradients into their Parameter::grad buffers.
  void backward(Var loss) {
    SOWREAP_REQUIRE(record_, "backward on a non-recording graph");
    SOWREAP_REQUIRE(rows(loss) == 1 && cols(loss) == 1, "backward: loss must be scalar");
    for (int i = 0; i <= loss.id; ++i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.needs_grad) n.grad.assign(n.value.size(), T(0));
    }
    nodes_[loss.id].grad[0] = T(1);
    for (int i = loss.id; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.back) n.back();
    }
    for (int i = 0; i <= loss.id; ++i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.param && n.needs_grad) {
        auto& pg = n.param->grad;
        for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
      }
    }
  }

 private:
  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<T> value;
    std::vector<T> grad;
    std::function<void()> back;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
  };

  static bool visible(const std::vector<char>& mask, const AttentionShape& s, int b, int i, int j, bool causal) {
    if (!mask[static_cast<std::size_t>(b * s.k_len + j)]) return false;
    return !causal || j <= i;
  }

  Var make(int r, int c, bool needs_grad) {
    Node n;
    n.rows = r;
    n.cols = c;
    n.value.assign(static_cast<std::size_t>(r) * c, T(0));
    n.needs_grad = record_ && needs_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  bool tracking(Var v) const { return record_ && nodes_[v.id].needs_grad; }

  MapM map(Var v) { return MapM(nodes_[v.id].value.data(), rows(v), cols(v)); }
  CMapM cmap(Var v) const { return CMapM(nodes_[v.id].value.data(), rows(v), cols(v)); }
  MapM gmap(Var v) { return MapM(nodes_[v.id].grad.data(), rows(v), cols(v)); }
  CMapM gmap_c(Var v) const { return CMapM(nodes_[v.id].grad.data(), rows(v), cols(v)); }

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace sowreap::nn
