#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "memshield/dataset.hpp"
#include "memshield/error.hpp"
#include "memshield/forest.hpp"
#include "memshield/rng.hpp"

namespace memshield {

template <typename M>
concept ProbabilityModel = requires(const M& m, std::span<const double> x) {
  { m.predict_proba(x) } -> std::convertible_to<double>;
  { m.n_features() } -> std::convertible_to<std::size_t>;
};

inline constexpr std::size_t kMaxExactShapleyFeatures = 20;

// Reference rows that stand in for "absent" features.
struct BackgroundSample {
  std::vector<std::vector<double>> rows;

  std::size_t size() const { return rows.size(); }
  std::size_t n_features() const { return rows.empty() ? 0 : rows.front().size(); }

  // B rows drawn without replacement (all rows, in order, when B >= n).
  static BackgroundSample draw(const Dataset& d, std::size_t b, std::uint64_t seed) {
    if (b == 0) throw PreconditionError("background size must be >= 1");
    if (d.empty()) throw PreconditionError("cannot draw a background from an empty dataset");
    std::vector<std::size_t> idx(d.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (b < d.size()) {
      Rng rng(seed);
      rng.shuffle(std::span(idx));
      idx.resize(b);
      std::sort(idx.begin(), idx.end());
    }
    BackgroundSample s;
    for (auto i : idx) s.rows.push_back(d.instances[i].features);
    return s;
  }
};

struct Attribution {
  double base_value = 0.0;   // mean model output over the background
  std::vector<double> phi;   // one per model feature
  double prediction = 0.0;   // model output for the instance
  std::vector<double> instance;
  std::size_t instance_id = 0;

  double efficiency_gap() const {
    double s = base_value;
    for (double p : phi) s += p;
    return s - prediction;
  }
};

namespace detail {

// |S|! (k - |S| - 1)! / k! for |S| = 0 .. k-1.
inline std::vector<double> shapley_weights(std::size_t k) {
  std::vector<double> fact(k + 1, 1.0);
  for (std::size_t i = 1; i <= k; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
  std::vector<double> w(k);
  for (std::size_t s = 0; s < k; ++s) w[s] = fact[s] * fact[k - s - 1] / fact[k];
  return w;
}

}  // namespace detail

// Exact interventional Shapley values. The value of a coalition S is the mean
// model output over background rows with the instance's values substituted on
// S; every one of the 2^k coalitions is evaluated.
template <ProbabilityModel M>
Attribution exact_shapley(const M& model, std::span<const double> instance, const BackgroundSample& background,
                          std::size_t instance_id = 0) {
  const std::size_t k = model.n_features();
  if (k > kMaxExactShapleyFeatures) {
    throw PreconditionError("exact Shapley enumeration is capped at " + std::to_string(kMaxExactShapleyFeatures) +
                            " features (model has " + std::to_string(k) +
                            "); sampling-based estimators are not provided");
  }
  if (instance.size() != k) throw DimensionError("instance/model feature count mismatch");
  if (background.size() == 0) throw PreconditionError("empty background sample");
  if (background.n_features() != k) throw DimensionError("background/model feature count mismatch");

  const std::size_t n_masks = std::size_t{1} << k;
  std::vector<double> value(n_masks, 0.0);
  std::vector<double> composite(k);
  for (std::size_t mask = 0; mask < n_masks; ++mask) {
    double sum = 0.0;
    for (const auto& row : background.rows) {
      for (std::size_t j = 0; j < k; ++j) composite[j] = (mask >> j) & 1 ? instance[j] : row[j];
      sum += model.predict_proba(composite);
    }
    value[mask] = sum / static_cast<double>(background.size());
  }

  const auto w = detail::shapley_weights(k);
  Attribution a;
  a.phi.assign(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
      if (mask & bit) continue;
      a.phi[j] += w[static_cast<std::size_t>(std::popcount(mask))] * (value[mask | bit] - value[mask]);
    }
  }
  a.base_value = value[0];
  a.prediction = model.predict_proba(instance);
  a.instance.assign(instance.begin(), instance.end());
  a.instance_id = instance_id;
  return a;
}

struct GlobalExplanation {
  std::vector<std::string> feature_names;
  std::vector<Attribution> attributions;
  std::vector<std::vector<double>> normalized;  // per attribution, feature values min-max scaled over the sample
  std::vector<double> mean_abs_phi;
  std::vector<std::size_t> order;  // feature indices by non-increasing mean |phi|, ties by lower index
  std::size_t background_size = 0;
};

template <ProbabilityModel M>
GlobalExplanation beeswarm_data(const M& model, const std::vector<std::vector<double>>& instances,
                                const std::vector<std::size_t>& instance_ids, const BackgroundSample& background,
                                std::vector<std::string> feature_names) {
  if (instances.empty()) throw PreconditionError("beeswarm needs at least one instance");
  if (instance_ids.size() != instances.size()) throw PreconditionError("instance id count mismatch");
  const std::size_t k = model.n_features();
  GlobalExplanation g;
  g.feature_names = std::move(feature_names);
  g.background_size = background.size();
  for (std::size_t i = 0; i < instances.size(); ++i) {
    g.attributions.push_back(exact_shapley(model, instances[i], background, instance_ids[i]));
  }
  std::vector<double> lo(k, 0.0), hi(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    lo[j] = hi[j] = instances.front()[j];
    for (const auto& x : instances) {
      lo[j] = std::min(lo[j], x[j]);
      hi[j] = std::max(hi[j], x[j]);
    }
  }
  g.mean_abs_phi.assign(k, 0.0);
  for (const auto& a : g.attributions) {
    std::vector<double> norm(k);
    for (std::size_t j = 0; j < k; ++j) {
      norm[j] = hi[j] == lo[j] ? 0.5 : (a.instance[j] - lo[j]) / (hi[j] - lo[j]);
      g.mean_abs_phi[j] += std::abs(a.phi[j]);
    }
    g.normalized.push_back(std::move(norm));
  }
  for (auto& m : g.mean_abs_phi) m /= static_cast<double>(g.attributions.size());
  g.order.resize(k);
  for (std::size_t j = 0; j < k; ++j) g.order[j] = j;
  std::stable_sort(g.order.begin(), g.order.end(),
                   [&](std::size_t a, std::size_t b) { return g.mean_abs_phi[a] > g.mean_abs_phi[b]; });
  return g;
}

struct ForceSegment {
  std::string feature;
  std::size_t index = 0;
  double value = 0.0;  // raw feature value
  double phi = 0.0;
  double start = 0.0;
  double end = 0.0;
};

struct ForcePlot {
  double base_value = 0.0;
  double prediction = 0.0;
  std::size_t instance_id = 0;
  std::vector<ForceSegment> segments;  // by non-increasing |phi|; each starts where the previous ended
};

inline ForcePlot force_plot_data(const Attribution& a, const std::vector<std::string>& feature_names) {
  if (feature_names.size() != a.phi.size()) throw DimensionError("feature name count mismatch");
  std::vector<std::size_t> idx(a.phi.size());
  for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t x, std::size_t y) { return std::abs(a.phi[x]) > std::abs(a.phi[y]); });
  ForcePlot p{a.base_value, a.prediction, a.instance_id, {}};
  double at = a.base_value;
  for (auto j : idx) {
    const double v = j < a.instance.size() ? a.instance[j] : 0.0;
    p.segments.push_back({feature_names[j], j, v, a.phi[j], at, at + a.phi[j]});
    at += a.phi[j];
  }
  return p;
}

// instance_id, feature, phi, feature_value_normalized, prediction, base_value
inline void write_attribution_csv(const GlobalExplanation& g, std::ostream& out) {
  out << "instance_id,feature,phi,feature_value_normalized,prediction,base_value\n";
  for (std::size_t i = 0; i < g.attributions.size(); ++i) {
    const auto& a = g.attributions[i];
    for (auto j : g.order) {
      out << a.instance_id << ',' << g.feature_names[j] << ',' << detail::format_double(a.phi[j]) << ','
          << detail::format_double(g.normalized[i][j]) << ',' << detail::format_double(a.prediction) << ','
          << detail::format_double(a.base_value) << '\n';
    }
  }
}

namespace detail {

inline std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  if (std::strcmp(buf, "-0.000") == 0) return "0.000";
  return buf;
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Low values blue, high values red.
inline std::string value_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(0 + t * 255));
  const int g = static_cast<int>(std::lround(138 - t * 138));
  const int b = static_cast<int>(std::lround(230 - t * 148));
  char buf[24];
  std::snprintf(buf, sizeof(buf), "rgb(%d,%d,%d)", r, g, b);
  return buf;
}

inline std::uint64_t fnv1a(std::uint64_t h, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) {
    h ^= (bits >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// One row per feature (ordered by mean |phi|), x = phi, colour = normalised
// feature value. Vertical jitter is seeded from a hash of the data, so the
// same explanation always renders to the same bytes.
inline std::string render_svg(const GlobalExplanation& g, std::string_view metadata = {}) {
  const double width = 900, left = 280, right = 40, row_h = 48, top = 40;
  const auto k = g.order.size();
  const double height = top + row_h * static_cast<double>(k) + 50;
  double span = 0.0;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < g.attributions.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      span = std::max(span, std::abs(g.attributions[i].phi[j]));
      h = detail::fnv1a(h, g.attributions[i].phi[j]);
      h = detail::fnv1a(h, g.normalized[i][j]);
    }
  }
  if (span == 0.0) span = 1.0;
  const double plot_w = width - left - right;
  auto x_of = [&](double phi) { return left + plot_w * (0.5 + 0.5 * phi / span); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fmt3(width) << "\" height=\""
    << detail::fmt3(height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  if (!metadata.empty()) s << "<metadata>" << detail::xml_escape(metadata) << "</metadata>\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line class=\"axis\" x1=\"" << detail::fmt3(x_of(0)) << "\" y1=\"" << detail::fmt3(top - 10) << "\" x2=\""
    << detail::fmt3(x_of(0)) << "\" y2=\"" << detail::fmt3(top + row_h * static_cast<double>(k)) << "\" stroke=\"#999\"/>\n";
  Rng rng(h);
  for (std::size_t row = 0; row < k; ++row) {
    const auto j = g.order[row];
    const double cy = top + row_h * (static_cast<double>(row) + 0.5);
    s << "<text class=\"row-label\" x=\"" << detail::fmt3(left - 10) << "\" y=\"" << detail::fmt3(cy + 4)
      << "\" text-anchor=\"end\">" << detail::xml_escape(g.feature_names[j]) << "</text>\n";
    for (std::size_t i = 0; i < g.attributions.size(); ++i) {
      const double jitter = (rng.uniform01() - 0.5) * row_h * 0.6;
      s << "<circle cx=\"" << detail::fmt3(x_of(g.attributions[i].phi[j])) << "\" cy=\""
        << detail::fmt3(cy + jitter) << "\" r=\"2.5\" fill=\"" << detail::value_color(g.normalized[i][j])
        << "\"/>\n";
    }
  }
  const double axis_y = top + row_h * static_cast<double>(k) + 25;
  s << "<text x=\"" << detail::fmt3(x_of(0)) << "\" y=\"" << detail::fmt3(axis_y)
    << "\" text-anchor=\"middle\">Shapley value (impact on malware probability)</text>\n";
  s << "<text x=\"" << detail::fmt3(left) << "\" y=\"" << detail::fmt3(axis_y) << "\">" << detail::fmt3(-span)
    << "</text>\n";
  s << "<text x=\"" << detail::fmt3(width - right) << "\" y=\"" << detail::fmt3(axis_y) << "\" text-anchor=\"end\">"
    << detail::fmt3(span) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

// Horizontal stacked arrows from the base value to the prediction; red pushes
// toward malware, blue toward benign.
inline std::string render_svg(const ForcePlot& p, std::string_view metadata = {}) {
  const double width = 900, left = 40, right = 40, bar_y = 70, bar_h = 26;
  const double plot_w = width - left - right;
  double lo = std::min(p.base_value, p.prediction), hi = std::max(p.base_value, p.prediction);
  for (const auto& seg : p.segments) {
    lo = std::min({lo, seg.start, seg.end});
    hi = std::max({hi, seg.start, seg.end});
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  auto x_of = [&](double v) { return left + plot_w * (v - lo) / (hi - lo); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fmt3(width)
    << "\" height=\"200.000\" font-family=\"sans-serif\" font-size=\"12\">\n";
  if (!metadata.empty()) s << "<metadata>" << detail::xml_escape(metadata) << "</metadata>\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < p.segments.size(); ++i) {
    const auto& seg = p.segments[i];
    const double x0 = x_of(seg.start), x1 = x_of(seg.end);
    const double dir = seg.phi >= 0 ? 1.0 : -1.0;
    const double tip = std::min(6.0, std::abs(x1 - x0));
    const double y0 = bar_y, y1 = bar_y + bar_h, ym = bar_y + bar_h / 2;
    s << "<polygon class=\"arrow\" data-feature=\"" << detail::xml_escape(seg.feature) << "\" points=\""
      << detail::fmt3(x0) << ',' << detail::fmt3(y0) << ' ' << detail::fmt3(x1 - dir * tip) << ','
      << detail::fmt3(y0) << ' ' << detail::fmt3(x1) << ',' << detail::fmt3(ym) << ' '
      << detail::fmt3(x1 - dir * tip) << ',' << detail::fmt3(y1) << ' ' << detail::fmt3(x0) << ','
      << detail::fmt3(y1) << "\" fill=\"" << (seg.phi >= 0 ? "rgb(255,0,82)" : "rgb(0,138,230)")
      << "\" stroke=\"white\"/>\n";
    const double label_y = bar_y + bar_h + 18 + 14 * static_cast<double>(i % 4);
    s << "<text x=\"" << detail::fmt3((x0 + x1) / 2) << "\" y=\"" << detail::fmt3(label_y)
      << "\" text-anchor=\"middle\">" << detail::xml_escape(seg.feature) << " = " << detail::fmt3(seg.value)
      << "</text>\n";
  }
  s << "<line class=\"marker base\" x1=\"" << detail::fmt3(x_of(p.base_value)) << "\" y1=\"40.000\" x2=\""
    << detail::fmt3(x_of(p.base_value)) << "\" y2=\"" << detail::fmt3(bar_y + bar_h + 4)
    << "\" stroke=\"#555\" stroke-dasharray=\"4 2\"/>\n";
  s << "<text x=\"" << detail::fmt3(x_of(p.base_value)) << "\" y=\"34.000\" text-anchor=\"middle\">base value "
    << detail::fmt3(p.base_value) << "</text>\n";
  s << "<line class=\"marker prediction\" x1=\"" << detail::fmt3(x_of(p.prediction)) << "\" y1=\"20.000\" x2=\""
    << detail::fmt3(x_of(p.prediction)) << "\" y2=\"" << detail::fmt3(bar_y + bar_h + 4)
    << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << detail::fmt3(x_of(p.prediction)) << "\" y=\"14.000\" text-anchor=\"middle\">f(x) = "
    << detail::fmt3(p.prediction) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace memshield
