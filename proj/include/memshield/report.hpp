#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <unistd.h>

#include "json.hpp"
#include "memshield/experiments.hpp"

namespace memshield {

using json = nlohmann::ordered_json;

inline constexpr int kReportSchemaVersion = 1;

enum class OutputFormat { Json, Csv, Both };

// Everything that determines a run's results. The output directory is left
// out of the embedded copy so runs into different directories stay
// byte-comparable.
struct RunConfig {
  std::string command;
  std::string data_path;
  std::uint64_t seed = 0;
  std::size_t k_features = 5;
  std::string subtype_filter;
  std::size_t background_size = 100;
  OutputFormat format = OutputFormat::Both;
  bool no_count_check = false;
  bool hard_vote = false;

  bool wants_json() const { return format != OutputFormat::Csv; }
  bool wants_csv() const { return format != OutputFormat::Json; }
};

inline json to_json(const RunConfig& c) {
  return {{"command", c.command},
          {"data", std::filesystem::path(c.data_path).filename().string()},
          {"seed", c.seed},
          {"k_features", c.k_features},
          {"subtype", c.subtype_filter},
          {"background_size", c.background_size},
          {"no_count_check", c.no_count_check},
          {"hard_vote", c.hard_vote},
          {"format_version", kReportSchemaVersion}};
}

// Top-level envelope shared by every JSON artifact.
inline json envelope(const RunConfig& c, std::string_view kind, json body) {
  return {{"schema_version", kReportSchemaVersion}, {"kind", kind}, {"run_config", to_json(c)}, {"result", std::move(body)}};
}

inline std::string csv_preamble(const RunConfig& c) { return "# run_config: " + to_json(c).dump() + "\n"; }

inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename into '" + path.string() + "': " + ec.message());
}

inline void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline json to_json(const ConfusionMatrix& cm) {
  return {{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
}

inline json to_json(const ClassMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
}

inline json to_json(const MetricReport& r) {
  return {{"accuracy", r.accuracy},
          {"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1},
          {"per_class", {{"benign", to_json(r.per_class[0])}, {"malware", to_json(r.per_class[1])}}},
          {"weighted", to_json(r.weighted)}};
}

inline json to_json(const CVReport& cv) {
  json folds = json::array();
  for (std::size_t i = 0; i < cv.folds.size(); ++i) {
    auto f = to_json(cv.folds[i]);
    f["confusion"] = to_json(cv.confusion[i]);
    folds.push_back(std::move(f));
  }
  auto stat = [&](auto pick) {
    return json{{"accuracy", pick(cv.accuracy)}, {"precision", pick(cv.precision)}, {"recall", pick(cv.recall)},
                {"f1", pick(cv.f1)}};
  };
  return {{"k", cv.k()},
          {"folds", folds},
          {"mean", stat([](const SummaryStat& s) { return s.mean; })},
          {"std", stat([](const SummaryStat& s) { return s.std; })},
          {"std_population", stat([](const SummaryStat& s) { return s.std_population; })}};
}

// fold, accuracy, precision, recall, f1 with weighted averages; then mean and
// std rows.
inline std::string cv_csv(const CVReport& cv) {
  std::ostringstream s;
  s << "fold,accuracy,precision,recall,f1\n";
  for (std::size_t i = 0; i < cv.folds.size(); ++i) {
    const auto& f = cv.folds[i];
    s << i + 1 << ',' << detail::format_double(f.accuracy) << ',' << detail::format_double(f.weighted.precision)
      << ',' << detail::format_double(f.weighted.recall) << ',' << detail::format_double(f.weighted.f1) << '\n';
  }
  s << "mean," << detail::format_double(cv.accuracy.mean) << ',' << detail::format_double(cv.precision.mean) << ','
    << detail::format_double(cv.recall.mean) << ',' << detail::format_double(cv.f1.mean) << '\n';
  s << "std," << detail::format_double(cv.accuracy.std) << ',' << detail::format_double(cv.precision.std) << ','
    << detail::format_double(cv.recall.std) << ',' << detail::format_double(cv.f1.std) << '\n';
  return s.str();
}

inline json to_json(const ImportanceRanking& r) {
  json a = json::array();
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    a.push_back({{"rank", i + 1}, {"feature", r.entries[i].name}, {"score", r.entries[i].score}});
  }
  return a;
}

inline json to_json(const SizeReport& s) {
  return {{"serialized_bytes", s.serialized_bytes}, {"node_count", s.node_count}, {"tree_count", s.tree_count}};
}

inline json to_json(const ThroughputReport& t) {
  return {{"threads", t.threads},
          {"n_predictions", t.n_predictions},
          {"wall_seconds", t.wall_seconds},
          {"predictions_per_second", t.predictions_per_second}};
}

inline json to_json(const LatencyReport& l) {
  return {{"n_predictions", l.n_predictions},
          {"warmup_count", l.warmup_count},
          {"batch_size", l.batch_size},
          {"mean_us", l.mean_us},
          {"median_us", l.median_us},
          {"p99_us", l.p99_us},
          {"timer_resolution_ns", l.timer_resolution_ns},
          {"low_resolution", l.low_resolution},
          {"hardware", l.hardware},
          {"reference_mean_us", 5.7}};
}

inline json to_json(const BaselineTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    auto m = to_json(r.metrics);
    m["classifier"] = name(r.kind);
    m["confusion"] = to_json(r.confusion);
    rows.push_back(std::move(m));
  }
  return {{"train_size", t.train_size}, {"test_size", t.test_size}, {"winner", name(t.winner)}, {"rows", rows}};
}

inline std::string baseline_csv(const BaselineTable& t) {
  std::ostringstream s;
  s << "classifier,accuracy,precision,recall,f1\n";
  for (const auto& r : t.rows) {
    s << name(r.kind) << ',' << detail::format_double(r.metrics.accuracy) << ','
      << detail::format_double(r.metrics.weighted.precision) << ','
      << detail::format_double(r.metrics.weighted.recall) << ',' << detail::format_double(r.metrics.weighted.f1)
      << '\n';
  }
  return s.str();
}

// Deterministic fields only; latency is reported separately.
inline json to_json(const SubtypeModelResult& r) {
  json strata = json::object();
  for (std::size_t s = 0; s < r.by_stratum.size(); ++s) {
    if (r.by_stratum[s].total == 0) continue;
    strata[stratum_name(s)] = {{"total", r.by_stratum[s].total}, {"correct", r.by_stratum[s].correct}};
  }
  return {{"subtype", name(r.subtype)},
          {"malware_type", name(info(r.subtype).type)},
          {"k", r.k},
          {"selected_features", to_json(r.selected)},
          {"train_size", r.train_size},
          {"test_size", r.test_size},
          {"confusion", to_json(r.confusion)},
          {"metrics", to_json(r.metrics)},
          {"held_in_subtype", to_json(r.held_in)},
          {"unseen_subtypes", to_json(r.unseen)},
          {"by_stratum", strata},
          {"size", to_json(r.size)},
          {"background_size", r.background.size()}};
}

inline json to_json(const TransferReport& t) {
  json ranking = json::array();
  for (std::size_t i = 0; i < t.ranking.size(); ++i) {
    const auto& r = t.results[t.ranking[i]];
    ranking.push_back({{"rank", i + 1}, {"subtype", name(r.subtype)}, {"accuracy", r.metrics.accuracy}});
  }
  json freq = json::object();
  for (const auto& [feature, counts] : t.frequency) freq[feature] = counts;
  json results = json::array();
  for (const auto& r : t.results) results.push_back(to_json(r));
  return {{"k", t.k}, {"ranking", ranking}, {"feature_frequency", freq}, {"results", results}};
}

// subtype, malware_type, rank, accuracy, model_size_bytes, feature_1..feature_k
inline std::string transfer_summary_csv(const TransferReport& t) {
  std::ostringstream s;
  s << "subtype,malware_type,rank,accuracy,model_size_bytes";
  for (std::size_t i = 1; i <= t.k; ++i) s << ",feature_" << i;
  s << '\n';
  for (const auto& r : t.results) {
    s << name(r.subtype) << ',' << name(info(r.subtype).type) << ',' << t.rank_of(r.subtype) << ','
      << detail::format_double(r.metrics.accuracy) << ',' << r.size.serialized_bytes;
    for (const auto& e : r.selected.entries) s << ',' << e.name;
    s << '\n';
  }
  return s.str();
}

// category, feature, rank_1..rank_k, total; most frequently top-ranked first.
inline std::string feature_frequency_csv(const TransferReport& t, const FeatureCatalog& catalog) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> rows(t.frequency.begin(), t.frequency.end());
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::ostringstream s;
  s << "category,feature";
  for (std::size_t i = 1; i <= t.k; ++i) s << ",rank_" << i;
  s << ",total\n";
  for (const auto& [feature, counts] : rows) {
    const auto idx = catalog.index_of(feature);
    s << (idx ? catalog[*idx].category : std::string("?")) << ',' << feature;
    std::size_t total = 0;
    for (auto c : counts) {
      s << ',' << c;
      total += c;
    }
    s << ',' << total << '\n';
  }
  return s.str();
}

inline json to_json(const FeatureSweepResult& r) {
  json pts = json::array();
  for (const auto& [k, a] : r.points) pts.push_back({{"k", k}, {"accuracy", a}});
  return {{"subtype", name(r.subtype)}, {"points", pts}};
}

inline json to_json(const Attribution& a, const std::vector<std::string>& names) {
  json phi = json::object();
  for (std::size_t j = 0; j < a.phi.size(); ++j) phi[names[j]] = a.phi[j];
  json values = json::object();
  for (std::size_t j = 0; j < a.instance.size(); ++j) values[names[j]] = a.instance[j];
  return {{"instance_id", a.instance_id},
          {"base_value", a.base_value},
          {"prediction", a.prediction},
          {"phi", phi},
          {"feature_values", values}};
}

// Background rows as CSV: a header of feature names, then one row per sample.
inline std::string background_csv(const BackgroundSample& bg, const std::vector<std::string>& names) {
  std::ostringstream s;
  for (std::size_t j = 0; j < names.size(); ++j) s << (j ? "," : "") << names[j];
  s << '\n';
  for (const auto& row : bg.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) s << (j ? "," : "") << detail::format_double(row[j]);
    s << '\n';
  }
  return s.str();
}

// Reads a background CSV and reorders its columns to `names`.
inline BackgroundSample parse_background_csv(std::istream& in, const std::vector<std::string>& names) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("background file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  std::vector<std::size_t> column(names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    auto it = std::find_if(header.begin(), header.end(),
                           [&](std::string_view h) { return normalize_feature_name(h) == names[j]; });
    if (it == header.end()) throw SchemaError("background file has no column '" + names[j] + "'");
    column[j] = static_cast<std::size_t>(it - header.begin());
  }
  BackgroundSample bg;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw ParseError("wrong number of cells in background file", row);
    std::vector<double> x(names.size());
    for (std::size_t j = 0; j < names.size(); ++j) x[j] = detail::parse_double(cells[column[j]], row, names[j]);
    bg.rows.push_back(std::move(x));
  }
  if (bg.rows.empty()) throw SchemaError("background file has no rows");
  return bg;
}

inline json counts_json(const Dataset& d) {
  const auto c = d.stratum_counts();
  json subtypes = json::array();
  for (const auto& s : kSubtypes) {
    subtypes.push_back({{"type", name(s.type)},
                        {"subtype", s.name},
                        {"count", c[1 + index(s.subtype)]},
                        {"expected", s.count},
                        {"match", c[1 + index(s.subtype)] == s.count}});
  }
  return {{"instances", d.size()},
          {"benign", d.count(Label::Benign)},
          {"malware", d.count(Label::Malware)},
          {"features", d.n_features()},
          {"subtypes", subtypes}};
}

}  // namespace memshield
