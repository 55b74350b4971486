#pragma once

// Binary model container, little-endian throughout:
//
//   "MSHD" | u16 version | u8 kind | u16 feature count
//   | feature names (u16 byte length + UTF-8 bytes each) | kind payload
//
// Forest / decision-tree payload:
//   u8 vote | u32 tree count | per tree: u32 node count, then nodes in pre-order
//   internal node: u8 tag=1 | u16 feature | f64 threshold | u32 left | u32 right
//   leaf:          u8 tag=0 | u64 benign count | u64 malware count
//
// Internal-node sample counts and impurity decreases are not stored; they are
// rebuilt from the leaf counts on load, so importance survives a round trip.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "memshield/baselines.hpp"
#include "memshield/error.hpp"
#include "memshield/forest.hpp"

namespace memshield {

inline constexpr char kModelMagic[4] = {'M', 'S', 'H', 'D'};
inline constexpr std::uint16_t kModelFormatVersion = 1;

enum class ModelKind : std::uint8_t {
  RandomForest = 0,
  DecisionTree = 1,
  GaussianNB = 2,
  KNeighbors = 3,
  LogisticRegression = 4,
};

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    bytes_.insert(bytes_.end(), buf, buf + sizeof(T));
  }
  void put_string(const std::string& s) {
    if (s.size() > UINT16_MAX) throw PreconditionError("feature name too long to serialise");
    put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint16_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  // Guards allocations driven by untrusted counts.
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw DecodeError("model v" + std::to_string(kModelFormatVersion) + ": truncated at byte " +
                        std::to_string(pos_));
    }
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline void write_header(ByteWriter& w, ModelKind kind, const std::vector<std::string>& names) {
  for (char c : kModelMagic) w.put<char>(c);
  w.put<std::uint16_t>(kModelFormatVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(kind));
  if (names.size() > UINT16_MAX) throw PreconditionError("too many features to serialise");
  w.put<std::uint16_t>(static_cast<std::uint16_t>(names.size()));
  for (const auto& n : names) w.put_string(n);
}

struct Header {
  ModelKind kind;
  std::vector<std::string> names;
};

inline Header read_header(ByteReader& r) {
  for (char c : kModelMagic) {
    if (r.get<char>() != c) throw DecodeError("not a model file (bad magic)");
  }
  const auto version = r.get<std::uint16_t>();
  if (version != kModelFormatVersion) {
    throw DecodeError("unsupported model format version " + std::to_string(version) + " (expected " +
                      std::to_string(kModelFormatVersion) + ")");
  }
  const auto kind = r.get<std::uint8_t>();
  if (kind > static_cast<std::uint8_t>(ModelKind::LogisticRegression)) {
    throw DecodeError("unknown model kind tag " + std::to_string(kind));
  }
  Header h{static_cast<ModelKind>(kind), {}};
  const auto n = r.get<std::uint16_t>();
  for (std::uint16_t i = 0; i < n; ++i) h.names.push_back(r.get_string());
  return h;
}

inline void write_forest_payload(ByteWriter& w, const RandomForestModel& m) {
  w.put<std::uint8_t>(static_cast<std::uint8_t>(m.params.vote));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.trees.size()));
  for (const auto& tree : m.trees) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) {
        w.put<std::uint8_t>(0);
        w.put<std::uint64_t>(node.counts[0]);
        w.put<std::uint64_t>(node.counts[1]);
      } else {
        w.put<std::uint8_t>(1);
        w.put<std::uint16_t>(static_cast<std::uint16_t>(node.feature));
        w.put<double>(node.threshold);
        w.put<std::uint32_t>(node.left);
        w.put<std::uint32_t>(node.right);
      }
    }
  }
}

inline RandomForestModel read_forest_payload(ByteReader& r, std::vector<std::string> names) {
  RandomForestModel m;
  m.feature_names = std::move(names);
  const auto vote = r.get<std::uint8_t>();
  if (vote > 1) throw DecodeError("bad vote tag " + std::to_string(vote));
  m.params.vote = static_cast<Vote>(vote);
  const auto n_trees = r.get<std::uint32_t>();
  if (n_trees == 0) throw DecodeError("forest with zero trees");
  r.need(static_cast<std::size_t>(n_trees) * 4);
  m.params.n_trees = n_trees;
  m.trees.resize(n_trees);
  for (auto& tree : m.trees) {
    tree.n_features = m.feature_names.size();
    const auto n_nodes = r.get<std::uint32_t>();
    if (n_nodes == 0) throw DecodeError("tree with zero nodes");
    r.need(static_cast<std::size_t>(n_nodes) * 17);
    tree.nodes.resize(n_nodes);
    std::vector<std::uint8_t> referenced(n_nodes, 0);
    for (std::uint32_t i = 0; i < n_nodes; ++i) {
      auto& node = tree.nodes[i];
      const auto tag = r.get<std::uint8_t>();
      if (tag == 0) {
        node.counts = {r.get<std::uint64_t>(), r.get<std::uint64_t>()};
        if (node.counts[0] + node.counts[1] == 0) throw DecodeError("empty leaf");
      } else if (tag == 1) {
        const auto f = r.get<std::uint16_t>();
        node.threshold = r.get<double>();
        node.left = r.get<std::uint32_t>();
        node.right = r.get<std::uint32_t>();
        if (f >= tree.n_features) throw DecodeError("feature index out of range");
        if (!std::isfinite(node.threshold)) throw DecodeError("non-finite threshold");
        if (node.left <= i || node.right <= i || node.left >= n_nodes || node.right >= n_nodes ||
            node.left == node.right) {
          throw DecodeError("bad child offset in node " + std::to_string(i));
        }
        if (++referenced[node.left] > 1 || ++referenced[node.right] > 1) {
          throw DecodeError("node referenced twice");
        }
        node.feature = f;
      } else {
        throw DecodeError("bad node tag " + std::to_string(tag));
      }
    }
    for (std::uint32_t i = 1; i < n_nodes; ++i) {
      if (!referenced[i]) throw DecodeError("unreachable node " + std::to_string(i));
    }
    // Children always follow their parent, so a reverse sweep sees them first.
    for (std::uint32_t i = n_nodes; i-- > 0;) {
      auto& node = tree.nodes[i];
      if (!node.is_leaf()) {
        const auto& l = tree.nodes[node.left];
        const auto& rr = tree.nodes[node.right];
        node.counts = {l.counts[0] + rr.counts[0], l.counts[1] + rr.counts[1]};
        const double n = static_cast<double>(node.counts[0] + node.counts[1]);
        const double nl = static_cast<double>(l.counts[0] + l.counts[1]);
        const double nr = static_cast<double>(rr.counts[0] + rr.counts[1]);
        node.impurity_decrease =
            gini_impurity(static_cast<double>(node.counts[0]), static_cast<double>(node.counts[1])) -
            (nl * gini_impurity(static_cast<double>(l.counts[0]), static_cast<double>(l.counts[1])) +
             nr * gini_impurity(static_cast<double>(rr.counts[0]), static_cast<double>(rr.counts[1]))) /
                n;
      }
      node.n_samples = node.counts[0] + node.counts[1];
    }
  }
  return m;
}

inline void put_vector(ByteWriter& w, const std::vector<double>& v) {
  for (double x : v) w.put<double>(x);
}

inline std::vector<double> get_vector(ByteReader& r, std::size_t n) {
  r.need(n * 8);
  std::vector<double> v(n);
  for (auto& x : v) x = r.get<double>();
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const RandomForestModel& model,
                                           ModelKind kind = ModelKind::RandomForest) {
  detail::ByteWriter w;
  detail::write_header(w, kind, model.feature_names);
  detail::write_forest_payload(w, model);
  return w.take();
}

inline std::vector<std::uint8_t> serialize(const BaselineModel& model) {
  detail::ByteWriter w;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, DecisionTreeModelBaseline>) {
          detail::write_header(w, ModelKind::DecisionTree, m.forest.feature_names);
          detail::write_forest_payload(w, m.forest);
        } else if constexpr (std::is_same_v<T, GaussianNBModel>) {
          detail::write_header(w, ModelKind::GaussianNB, m.feature_names);
          for (std::size_t c = 0; c < 2; ++c) {
            w.put<double>(m.log_prior[c]);
            detail::put_vector(w, m.mean[c]);
            detail::put_vector(w, m.variance[c]);
          }
        } else if constexpr (std::is_same_v<T, KnnModel>) {
          detail::write_header(w, ModelKind::KNeighbors, m.feature_names);
          w.put<std::uint32_t>(static_cast<std::uint32_t>(m.k));
          w.put<std::uint64_t>(m.n_rows());
          detail::put_vector(w, m.rows);
          for (std::size_t i = 0; i < m.n_rows(); ++i) {
            w.put<std::uint8_t>(m.labels[i]);
            w.put<std::uint64_t>(m.source_rows[i]);
          }
        } else {
          detail::write_header(w, ModelKind::LogisticRegression, m.feature_names);
          w.put<double>(m.bias);
          detail::put_vector(w, m.weights);
        }
      },
      model);
  return w.take();
}

inline ModelKind peek_kind(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  return detail::read_header(r).kind;
}

inline RandomForestModel deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  auto h = detail::read_header(r);
  if (h.kind != ModelKind::RandomForest && h.kind != ModelKind::DecisionTree) {
    throw DecodeError("model is not a tree ensemble");
  }
  auto m = detail::read_forest_payload(r, std::move(h.names));
  if (!r.done()) throw DecodeError("trailing bytes after model");
  return m;
}

inline BaselineModel deserialize_baseline(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  auto h = detail::read_header(r);
  const auto d = h.names.size();
  BaselineModel out;
  switch (h.kind) {
    case ModelKind::RandomForest:
      throw DecodeError("model is a random forest, not a baseline");
    case ModelKind::DecisionTree:
      out = DecisionTreeModelBaseline{detail::read_forest_payload(r, std::move(h.names))};
      break;
    case ModelKind::GaussianNB: {
      GaussianNBModel m;
      m.feature_names = std::move(h.names);
      for (std::size_t c = 0; c < 2; ++c) {
        m.log_prior[c] = r.get<double>();
        m.mean[c] = detail::get_vector(r, d);
        m.variance[c] = detail::get_vector(r, d);
      }
      out = std::move(m);
      break;
    }
    case ModelKind::KNeighbors: {
      KnnModel m;
      m.feature_names = std::move(h.names);
      m.k = r.get<std::uint32_t>();
      const auto n = r.get<std::uint64_t>();
      if (m.k == 0) throw DecodeError("KNN with k = 0");
      if (d != 0 && n > SIZE_MAX / 8 / d) throw DecodeError("KNN row count overflows");
      m.rows = detail::get_vector(r, static_cast<std::size_t>(n) * d);
      r.need(static_cast<std::size_t>(n) * 9);
      for (std::uint64_t i = 0; i < n; ++i) {
        m.labels.push_back(r.get<std::uint8_t>());
        m.source_rows.push_back(r.get<std::uint64_t>());
      }
      out = std::move(m);
      break;
    }
    case ModelKind::LogisticRegression: {
      LogisticRegressionModel m;
      m.feature_names = std::move(h.names);
      m.bias = r.get<double>();
      m.weights = detail::get_vector(r, d);
      out = std::move(m);
      break;
    }
  }
  if (!r.done()) throw DecodeError("trailing bytes after model");
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace memshield
