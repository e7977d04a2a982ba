#include "sowreap/syntax.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace sowreap {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

class PtbReader {
 public:
  explicit PtbReader(std::string_view text) : text_(text) {}

  ConstituencyTree read() {
    skip_ws();
    if (pos_ >= text_.size()) throw FormatError("empty tree", pos_);
    ConstituencyTree tree = read_node();
    skip_ws();
    if (pos_ != text_.size()) throw FormatError("trailing characters after tree", pos_);
    // "( (S ...))" and "(ROOT (S ...))" wrappers without a label are unwrapped.
    while (tree.label.empty() && tree.children.size() == 1) {
      ConstituencyTree inner = std::move(tree.children.front());
      tree = std::move(inner);
    }
    return tree;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }

  std::string read_atom() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_]) && text_[pos_] != '(' && text_[pos_] != ')') ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  ConstituencyTree read_node() {
    const std::size_t open = pos_;
    if (text_[pos_] != '(') throw FormatError("expected '('", pos_);
    ++pos_;
    skip_ws();
    if (pos_ >= text_.size()) throw FormatError("unbalanced brackets", open);
    ConstituencyTree node;
    if (text_[pos_] != '(' && text_[pos_] != ')') node.label = read_atom();
    skip_ws();
    if (pos_ >= text_.size()) throw FormatError("unbalanced brackets", open);
    if (text_[pos_] == ')') throw FormatError("empty constituent", open);

    if (text_[pos_] != '(') {
      // Preterminal: (TAG word)
      const std::size_t word_pos = pos_;
      std::string word = read_atom();
      skip_ws();
      if (pos_ >= text_.size()) throw FormatError("unbalanced brackets", open);
      if (text_[pos_] != ')') throw FormatError("preterminal has more than one token", word_pos);
      ++pos_;
      if (node.label.empty()) throw FormatError("preterminal without a tag", open);
      ++next_index_;
      node.leaf_token = Token{std::move(word), next_index_, node.label};
      node.span = {next_index_, next_index_};
      return node;
    }

    const int first = next_index_ + 1;
    while (true) {
      skip_ws();
      if (pos_ >= text_.size()) throw FormatError("unbalanced brackets", open);
      if (text_[pos_] == ')') {
        ++pos_;
        break;
      }
      if (text_[pos_] != '(') throw FormatError("bare token outside a preterminal", pos_);
      node.children.push_back(read_node());
    }
    node.span = {first, next_index_};
    return node;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int next_index_ = 0;
};

void write_ptb(const ConstituencyTree& t, std::string& out) {
  out += '(';
  out += t.label;
  if (t.is_leaf()) {
    out += ' ';
    out += t.leaf_token->surface;
  } else {
    for (const auto& c : t.children) {
      out += ' ';
      write_ptb(c, out);
    }
  }
  out += ')';
}

void collect_yield(const ConstituencyTree& t, std::vector<Token>& out) {
  if (t.is_leaf()) {
    out.push_back(*t.leaf_token);
    return;
  }
  for (const auto& c : t.children) collect_yield(c, out);
}

int parse_int(std::string_view s, std::size_t line_offset) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw FormatError("expected an integer, got '" + std::string(s) + "'", line_offset);
  }
  return v;
}

}  // namespace

ConstituencyTree parse_ptb(std::string_view text) { return PtbReader(text).read(); }

std::string to_ptb(const ConstituencyTree& tree) {
  std::string out;
  write_ptb(tree, out);
  return out;
}

std::vector<Token> yield_of(const ConstituencyTree& node) {
  std::vector<Token> out;
  out.reserve(static_cast<std::size_t>(std::max(0, node.size())));
  collect_yield(node, out);
  return out;
}

std::vector<std::string> surfaces(std::span<const Token> tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.surface);
  return out;
}

std::string join(std::span<const std::string> words, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

DependencyTree::DependencyTree(std::vector<Token> tokens, std::vector<int> heads)
    : tokens_(std::move(tokens)), heads_(std::move(heads)) {
  const int n = size();
  if (static_cast<int>(heads_.size()) != n) throw FormatError("dependency head count mismatch");
  children_.assign(static_cast<std::size_t>(n) + 1, {});
  int roots = 0;
  for (int i = 1; i <= n; ++i) {
    const int h = heads_[static_cast<std::size_t>(i - 1)];
    if (h < 0 || h > n) throw FormatError("head index out of range for token " + std::to_string(i));
    if (h == i) throw FormatError("token " + std::to_string(i) + " is its own head");
    if (h == 0) {
      ++roots;
      root_ = i;
    }
    children_[static_cast<std::size_t>(h)].push_back(i);
  }
  if (n > 0 && roots != 1) throw FormatError("dependency tree must have exactly one root, found " + std::to_string(roots));
  // Every token must reach the root without revisiting a node.
  for (int i = 1; i <= n; ++i) {
    int cur = i;
    for (int steps = 0; cur != 0; ++steps) {
      if (steps > n) throw FormatError("cycle detected in dependency heads at token " + std::to_string(i));
      cur = heads_[static_cast<std::size_t>(cur - 1)];
    }
  }
}

std::vector<int> DependencyTree::depth_first() const {
  std::vector<int> order;
  if (root_ == 0) return order;
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    order.push_back(cur);
    const auto& kids = children_[static_cast<std::size_t>(cur)];
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }
  return order;
}

DependencyTree parse_dependencies(std::string_view text) {
  std::vector<Token> tokens;
  std::vector<int> heads;
  std::size_t offset = 0;
  while (offset < text.size()) {
    std::size_t eol = text.find('\n', offset);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(offset, eol - offset);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::size_t line_offset = offset;
    offset = eol + 1;
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    std::vector<std::string_view> fields;
    std::size_t s = 0;
    while (true) {
      const std::size_t tab = line.find('\t', s);
      fields.push_back(line.substr(s, tab == std::string_view::npos ? std::string_view::npos : tab - s));
      if (tab == std::string_view::npos) break;
      s = tab + 1;
    }
    if (fields.size() != 4) throw FormatError("dependency line needs 4 tab-separated fields", line_offset);
    const int index = parse_int(fields[0], line_offset);
    if (index != static_cast<int>(tokens.size()) + 1) {
      throw FormatError("dependency indices must be consecutive from 1", line_offset);
    }
    if (fields[1].empty()) throw FormatError("empty token surface", line_offset);
    tokens.push_back(Token{std::string(fields[1]), index, std::string(fields[2])});
    heads.push_back(parse_int(fields[3], line_offset));
  }
  if (tokens.empty()) throw FormatError("empty dependency tree");
  return DependencyTree(std::move(tokens), std::move(heads));
}

std::vector<DependencyTree> parse_dependency_file(std::string_view text) {
  std::vector<DependencyTree> out;
  std::size_t start = 0;
  std::size_t offset = 0;
  bool has_content = false;
  auto flush = [&](std::size_t end) {
    if (has_content) out.push_back(parse_dependencies(text.substr(start, end - start)));
    has_content = false;
  };
  while (offset <= text.size()) {
    std::size_t eol = text.find('\n', offset);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(offset, eol - offset);
    const bool blank = line.find_first_not_of(" \t\r") == std::string_view::npos;
    if (blank) {
      flush(offset);
      start = eol + 1;
    } else {
      has_content = true;
    }
    offset = eol + 1;
  }
  flush(text.size());
  return out;
}

std::string to_conll(const DependencyTree& tree) {
  std::ostringstream os;
  for (const auto& t : tree.tokens()) {
    os << t.index << '\t' << t.surface << '\t' << t.pos_tag << '\t' << tree.head(t.index) << '\n';
  }
  return os.str();
}

bool is_permutation(std::span<const int> perm) {
  const int n = static_cast<int>(perm.size());
  std::vector<char> seen(perm.size(), 0);
  for (int p : perm) {
    if (p < 1 || p > n || seen[static_cast<std::size_t>(p - 1)]) return false;
    seen[static_cast<std::size_t>(p - 1)] = 1;
  }
  return true;
}

void check_permutation(std::span<const int> perm) {
  SOWREAP_REQUIRE(is_permutation(perm), "sequence is not a permutation of 1..n");
}

std::vector<int> identity_permutation(int n) {
  std::vector<int> out(static_cast<std::size_t>(std::max(0, n)));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i + 1;
  return out;
}

std::vector<int> inverse_permutation(std::span<const int> perm) {
  check_permutation(perm);
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i] - 1)] = static_cast<int>(i) + 1;
  return inv;
}

}  // namespace sowreap
