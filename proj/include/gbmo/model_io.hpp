#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gbmo/booster.hpp"
#include "gbmo/core.hpp"
#include "gbmo/tree.hpp"

// Text model format, one record per line (see docs/model_format.md):
//
//   gbmo-model 1
//   loss <mse|softmax>
//   mode <mo_dense|mo_sparse|mo_restricted|mo_exact|so_baseline>
//   num_features <m>
//   num_outputs <d>
//   learning_rate <real>
//   base_score <real> x d
//   num_trees <t>
//   tree <index> <node count>
//   split <id> <feature> <bin> <threshold> <left> <right>
//   leaf <id> dense <real> x d
//   leaf <id> sparse <col>:<real> ...
//   end
//
// Reals use the shortest representation that parses back to the same double.

namespace gbmo {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  // Next non-empty line split on spaces; throws at end of input.
  std::vector<std::string_view> next(std::string_view expecting) {
    while (std::getline(in_, line_)) {
      ++line_no_;
      if (!line_.empty() && line_.back() == '\r') line_.pop_back();
      if (line_.empty()) continue;
      std::vector<std::string_view> tokens;
      std::string_view rest = line_;
      while (!rest.empty()) {
        const auto space = rest.find(' ');
        const auto tok = rest.substr(0, space);
        if (!tok.empty()) tokens.push_back(tok);
        if (space == std::string_view::npos) break;
        rest.remove_prefix(space + 1);
      }
      return tokens;
    }
    throw fail("unexpected end of file, expecting " + std::string(expecting));
  }

  DataError fail(const std::string& what) const {
    return DataError("model line " + std::to_string(line_no_) + ": " + what);
  }

  double real(std::string_view tok) const {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
      throw fail("invalid real '" + std::string(tok) + "'");
    }
    return v;
  }

  std::size_t count(std::string_view tok) const {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw fail("invalid count '" + std::string(tok) + "'");
    }
    return v;
  }

  // Checks `key` and the token count (including the key).
  void expect(const std::vector<std::string_view>& t, std::string_view key, std::size_t n) const {
    if (t.empty() || t[0] != key) {
      throw fail("expected '" + std::string(key) + "', found '" +
                 (t.empty() ? std::string() : std::string(t[0])) + "'");
    }
    if (t.size() != n) {
      throw fail("'" + std::string(key) + "' needs " + std::to_string(n - 1) + " values, found " +
                 std::to_string(t.size() - 1));
    }
  }

 private:
  std::istream& in_;
  std::string line_;
  std::size_t line_no_ = 0;
};

}  // namespace detail

inline void write_model(std::ostream& out, const Ensemble& ens) {
  using detail::format_real;
  out << "gbmo-model " << kModelFormatVersion << '\n';
  out << "loss " << to_string(ens.loss) << '\n';
  out << "mode " << to_string(ens.mode) << '\n';
  out << "num_features " << ens.num_features << '\n';
  out << "num_outputs " << ens.num_outputs << '\n';
  out << "learning_rate " << format_real(ens.learning_rate) << '\n';
  out << "base_score";
  for (double v : ens.base_score) out << ' ' << format_real(v);
  out << '\n';
  out << "num_trees " << ens.trees.size() << '\n';
  for (std::size_t t = 0; t < ens.trees.size(); ++t) {
    const auto& nodes = ens.trees[t].nodes();
    out << "tree " << t << ' ' << nodes.size() << '\n';
    for (std::size_t id = 0; id < nodes.size(); ++id) {
      const auto& n = nodes[id];
      if (!n.is_leaf()) {
        out << "split " << id << ' ' << n.feature << ' ' << n.threshold_bin << ' '
            << format_real(n.threshold) << ' ' << n.left << ' ' << n.right << '\n';
      } else if (n.leaf.is_dense()) {
        out << "leaf " << id << " dense";
        for (double w : n.leaf.weights) out << ' ' << format_real(w);
        out << '\n';
      } else {
        out << "leaf " << id << " sparse";
        for (std::size_t i = 0; i < n.leaf.columns.size(); ++i) {
          out << ' ' << n.leaf.columns[i] << ':' << format_real(n.leaf.weights[i]);
        }
        out << '\n';
      }
    }
  }
  out << "end\n";
}

inline std::string model_to_string(const Ensemble& ens) {
  std::ostringstream out;
  write_model(out, ens);
  return out.str();
}

namespace detail {

inline Tree read_tree(LineReader& r, std::size_t index, std::size_t m, std::size_t d) {
  const auto header = r.next("tree");
  r.expect(header, "tree", 3);
  if (r.count(header[1]) != index) throw r.fail("tree index out of order");
  const std::size_t count = r.count(header[2]);
  if (count == 0) throw r.fail("tree has no nodes");
  std::vector<TreeNode> nodes(count);
  std::vector<int> referenced(count, 0);
  for (std::size_t id = 0; id < count; ++id) {
    const auto t = r.next("node");
    if (t.size() < 2 || r.count(t[1]) != id) throw r.fail("expected node " + std::to_string(id));
    TreeNode& n = nodes[id];
    if (t[0] == "split") {
      r.expect(t, "split", 7);
      n.feature = r.count(t[2]);
      n.threshold_bin = r.count(t[3]);
      n.threshold = r.real(t[4]);
      const std::size_t left = r.count(t[5]);
      const std::size_t right = r.count(t[6]);
      if (n.feature >= m) throw r.fail("feature " + std::to_string(n.feature) + " out of range");
      if (left <= id || right <= id || left >= count || right >= count || left == right) {
        throw r.fail("child ids must be distinct, after the parent and below the node count");
      }
      if (++referenced[left] > 1 || ++referenced[right] > 1) throw r.fail("node has two parents");
      n.left = static_cast<std::int32_t>(left);
      n.right = static_cast<std::int32_t>(right);
    } else if (t[0] == "leaf") {
      if (t.size() < 3) throw r.fail("leaf needs a kind");
      if (t[2] == "dense") {
        r.expect(t, "leaf", 3 + d);
        for (std::size_t j = 0; j < d; ++j) n.leaf.weights.push_back(r.real(t[3 + j]));
      } else if (t[2] == "sparse") {
        if (t.size() < 4 || t.size() > 3 + d) throw r.fail("sparse leaf needs 1..d entries");
        for (std::size_t i = 3; i < t.size(); ++i) {
          const auto colon = t[i].find(':');
          if (colon == std::string_view::npos) throw r.fail("sparse entry needs col:weight");
          const std::size_t col = r.count(t[i].substr(0, colon));
          if (col >= d) throw r.fail("output column " + std::to_string(col) + " out of range");
          if (!n.leaf.columns.empty() && col <= n.leaf.columns.back()) {
            throw r.fail("sparse columns must be strictly increasing");
          }
          n.leaf.columns.push_back(col);
          n.leaf.weights.push_back(r.real(t[i].substr(colon + 1)));
        }
      } else {
        throw r.fail("unknown leaf kind '" + std::string(t[2]) + "'");
      }
    } else {
      throw r.fail("unknown record '" + std::string(t[0]) + "'");
    }
  }
  for (std::size_t id = 1; id < count; ++id) {
    if (referenced[id] != 1) throw r.fail("node " + std::to_string(id) + " is unreachable");
  }
  return Tree(d, std::move(nodes));
}

}  // namespace detail

inline Ensemble read_model(std::istream& in) {
  detail::LineReader r(in);
  auto t = r.next("header");
  r.expect(t, "gbmo-model", 2);
  if (r.count(t[1]) != static_cast<std::size_t>(kModelFormatVersion)) {
    throw r.fail("unsupported model format version " + std::string(t[1]));
  }
  Ensemble ens;
  t = r.next("loss");
  r.expect(t, "loss", 2);
  try {
    ens.loss = parse_loss(t[1]);
  } catch (const ConfigError& e) {
    throw r.fail(e.what());
  }
  t = r.next("mode");
  r.expect(t, "mode", 2);
  try {
    ens.mode = parse_mode(t[1]);
  } catch (const ConfigError& e) {
    throw r.fail(e.what());
  }
  t = r.next("num_features");
  r.expect(t, "num_features", 2);
  ens.num_features = r.count(t[1]);
  t = r.next("num_outputs");
  r.expect(t, "num_outputs", 2);
  ens.num_outputs = r.count(t[1]);
  if (ens.num_features == 0 || ens.num_outputs == 0) throw r.fail("dimensions must be positive");
  t = r.next("learning_rate");
  r.expect(t, "learning_rate", 2);
  ens.learning_rate = r.real(t[1]);
  t = r.next("base_score");
  r.expect(t, "base_score", 1 + ens.num_outputs);
  for (std::size_t j = 0; j < ens.num_outputs; ++j) ens.base_score.push_back(r.real(t[1 + j]));
  t = r.next("num_trees");
  r.expect(t, "num_trees", 2);
  const std::size_t num_trees = r.count(t[1]);
  for (std::size_t i = 0; i < num_trees; ++i) {
    ens.trees.push_back(detail::read_tree(r, i, ens.num_features, ens.num_outputs));
  }
  t = r.next("end");
  r.expect(t, "end", 1);
  return ens;
}

inline Ensemble model_from_string(const std::string& text) {
  std::istringstream in(text);
  return read_model(in);
}

inline void save_model(const Ensemble& ens, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_model(out, ens);
  out.flush();
  if (!out) throw DataError("failed writing '" + path + "'");
}

inline Ensemble load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model '" + path + "'");
  return read_model(in);
}

}  // namespace gbmo
