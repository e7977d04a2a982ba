#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sowreap {

/// Word vectors for alignment. `context` is the sentence the token occurs in
/// and `position` its 0-based index; static backends ignore both.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dimension() const = 0;
  virtual std::vector<double> lookup(std::string_view token, std::span<const std::string> context,
                                     int position) const = 0;

  std::vector<double> lookup(std::string_view token) const { return lookup(token, {}, 0); }
  /// One vector per token of `sentence`.
  std::vector<std::vector<double>> lookup_sentence(std::span<const std::string> sentence) const;
};

/// Deterministic Gaussian vectors seeded from a hash of the token. Distinct
/// tokens get (almost surely) distinct directions.
class HashEmbeddings : public EmbeddingProvider {
 public:
  explicit HashEmbeddings(int dim = 64, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {}
  int dimension() const override { return dim_; }
  std::vector<double> lookup(std::string_view token, std::span<const std::string> context,
                             int position) const override;
  using EmbeddingProvider::lookup;

 private:
  int dim_;
  std::uint64_t seed_;
};

/// GloVe-format text file (`word v1 ... vd`). Unknown words fall back to a
/// hash vector so that distinct unknown words stay distinguishable.
class VectorFileEmbeddings : public EmbeddingProvider {
 public:
  static VectorFileEmbeddings load(const std::string& path);
  static VectorFileEmbeddings parse(std::string_view text);

  int dimension() const override { return dim_; }
  std::vector<double> lookup(std::string_view token, std::span<const std::string> context,
                             int position) const override;
  using EmbeddingProvider::lookup;
  std::size_t size() const { return vectors_.size(); }

 private:
  int dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

/// Explicit table, mostly for tests with hand-set vectors.
class TableEmbeddings : public EmbeddingProvider {
 public:
  TableEmbeddings(int dim, std::unordered_map<std::string, std::vector<double>> table);
  int dimension() const override { return dim_; }
  std::vector<double> lookup(std::string_view token, std::span<const std::string> context,
                             int position) const override;
  using EmbeddingProvider::lookup;

 private:
  int dim_;
  std::unordered_map<std::string, std::vector<double>> table_;
};

/// Cosine similarity; 0 when either vector is zero.
double cosine(std::span<const double> a, std::span<const double> b);

/// Builds a provider from a config value: "hash" / "hash:<dim>" or a file path.
std::unique_ptr<EmbeddingProvider> make_embedding_provider(const std::string& source, std::uint64_t seed);

}  // namespace sowreap
