#include "sowreap/embeddings.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "sowreap/error.hpp"
#include "sowreap/rng.hpp"
#include "sowreap/syntax.hpp"

namespace sowreap {

std::vector<std::vector<double>> EmbeddingProvider::lookup_sentence(std::span<const std::string> sentence) const {
  std::vector<std::vector<double>> out;
  out.reserve(sentence.size());
  for (std::size_t i = 0; i < sentence.size(); ++i) out.push_back(lookup(sentence[i], sentence, static_cast<int>(i)));
  return out;
}

std::vector<double> HashEmbeddings::lookup(std::string_view token, std::span<const std::string>, int) const {
  Rng rng(splitmix64(fnv1a(token) ^ seed_));
  std::vector<double> v(static_cast<std::size_t>(dim_));
  for (auto& x : v) x = rng.normal();
  return v;
}

VectorFileEmbeddings VectorFileEmbeddings::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embedding file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

VectorFileEmbeddings VectorFileEmbeddings::parse(std::string_view text) {
  VectorFileEmbeddings out;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto fields = split_whitespace(text.substr(pos, end - pos));
    ++line_no;
    if (!fields.empty()) {
      if (fields.size() < 2) throw FormatError("embedding line " + std::to_string(line_no) + ": no values", pos);
      std::vector<double> v;
      v.reserve(fields.size() - 1);
      for (std::size_t i = 1; i < fields.size(); ++i) {
        try {
          v.push_back(std::stod(fields[i]));
        } catch (const std::exception&) {
          throw FormatError("embedding line " + std::to_string(line_no) + ": bad number '" + fields[i] + "'", pos);
        }
      }
      if (out.dim_ == 0) out.dim_ = static_cast<int>(v.size());
      if (static_cast<int>(v.size()) != out.dim_)
        throw FormatError("embedding line " + std::to_string(line_no) + ": dimension mismatch", pos);
      out.vectors_.emplace(fields[0], std::move(v));
    }
    pos = end + 1;
  }
  if (out.dim_ == 0) throw FormatError("embedding file has no vectors");
  return out;
}

std::vector<double> VectorFileEmbeddings::lookup(std::string_view token, std::span<const std::string> context,
                                                 int position) const {
  auto it = vectors_.find(std::string(token));
  if (it != vectors_.end()) return it->second;
  return HashEmbeddings(dim_).lookup(token, context, position);
}

TableEmbeddings::TableEmbeddings(int dim, std::unordered_map<std::string, std::vector<double>> table)
    : dim_(dim), table_(std::move(table)) {
  for (const auto& [k, v] : table_)
    SOWREAP_REQUIRE(static_cast<int>(v.size()) == dim_, "TableEmbeddings: vector for '" + k + "' has wrong dimension");
}

std::vector<double> TableEmbeddings::lookup(std::string_view token, std::span<const std::string>, int) const {
  auto it = table_.find(std::string(token));
  if (it == table_.end()) return std::vector<double>(static_cast<std::size_t>(dim_), 0.0);
  return it->second;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  SOWREAP_REQUIRE(a.size() == b.size(), "cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const std::string& source, std::uint64_t seed) {
  if (source == "hash") return std::make_unique<HashEmbeddings>(64, seed);
  if (source.starts_with("hash:")) {
    const int dim = std::stoi(source.substr(5));
    if (dim <= 0) throw FormatError("embeddings '" + source + "': dimension must be positive");
    return std::make_unique<HashEmbeddings>(dim, seed);
  }
  return std::make_unique<VectorFileEmbeddings>(VectorFileEmbeddings::load(source));
}

}  // namespace sowreap
