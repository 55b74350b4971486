// memshield: command-line front end for the detection pipeline.
//
// Exit codes: 0 success, 1 data or validation failure, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "memshield/memshield.hpp"

namespace fs = std::filesystem;
using namespace memshield;

namespace {

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string data;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::size_t k = 5;
  std::size_t background = 100;
  std::string format = "both";
  bool no_count_check = false;
  bool hard_vote = false;
  std::size_t trees = 100;
  std::size_t threads = 1;

  // subtype / sweep
  std::string subtype;
  std::string k_list = "1,2,3,4,5,6,7,8,9,10";
  bool latency = false;

  // stage1
  std::size_t cv_folds = 0;

  // explain / bench
  std::string model;
  std::string background_file;
  std::optional<std::size_t> instance;
  bool beeswarm = false;
  std::size_t sample = 200;
  std::size_t reps = 100000;
  std::size_t warmup = 1000;
  std::size_t batch = 1000;
  std::optional<std::size_t> throughput_threads;

  // fixture
  std::size_t n_benign = 1000;
  std::size_t n_per_subtype = 100;
  std::size_t n_features = 5;
  std::optional<std::size_t> n_informative;
  double separation = 4.0;
  std::string fixture_subtypes = "all";
  std::optional<double> cic_scale;
  std::string fixture_name = "fixture.csv";
};

std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(sep) : "") + v[i];
  return out;
}

std::string valid_subtype_names() {
  std::vector<std::string> names;
  for (const auto& s : kSubtypes) names.emplace_back(s.name);
  return join(names, ", ");
}

Subtype require_subtype(const std::string& text) {
  auto s = subtype_from_name(text);
  if (!s) throw UsageError("unknown subtype '" + text + "'; valid names: " + valid_subtype_names());
  return *s;
}

std::uint64_t require_seed(const Options& o, std::string_view command) {
  if (!o.seed) throw UsageError(std::string(command) + " trains models and requires --seed");
  return *o.seed;
}

OutputFormat parse_format(const std::string& f) {
  if (f == "json") return OutputFormat::Json;
  if (f == "csv") return OutputFormat::Csv;
  return OutputFormat::Both;
}

RunConfig run_config(const Options& o, std::string command) {
  RunConfig rc;
  rc.command = std::move(command);
  rc.data_path = o.data;
  rc.seed = o.seed.value_or(0);
  rc.k_features = o.k;
  rc.subtype_filter = o.subtype;
  rc.background_size = o.background;
  rc.format = parse_format(o.format);
  rc.no_count_check = o.no_count_check;
  rc.hard_vote = o.hard_vote;
  return rc;
}

Dataset load(const Options& o) {
  if (o.data.empty()) throw UsageError("no dataset: pass --data or set MEMSHIELD_DATA");
  LoadOptions lo;
  lo.count_check = !o.no_count_check;
  return load_dataset(o.data, lo);
}

ForestParams forest_params(const Options& o) {
  ForestParams p;
  p.n_trees = o.trees;
  p.n_threads = o.threads;
  p.vote = o.hard_vote ? Vote::Hard : Vote::Soft;
  return p;
}

fs::path command_dir(const Options& o, std::string_view command) { return fs::path(o.out) / command; }

void emit_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

void emit_csv(const fs::path& path, const RunConfig& rc, const std::string& body) {
  write_file_atomic(path, csv_preamble(rc) + body);
}

void announce(const fs::path& p) { std::cout << "wrote " << p.string() << '\n'; }

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// ---------------------------------------------------------------------------

int cmd_validate(const Options& o) {
  if (o.data.empty()) throw UsageError("no dataset: pass --data or set MEMSHIELD_DATA");
  LoadOptions lo;
  lo.count_check = false;
  const auto d = load_dataset(o.data, lo);
  const auto rc = run_config(o, "validate");
  const auto dir = command_dir(o, "validate");
  const auto counts = counts_json(d);

  std::cout << "instances " << d.size() << "  features " << d.n_features() << "  benign "
            << d.count(Label::Benign) << "  malware " << d.count(Label::Malware) << '\n';
  std::cout << std::left << std::setw(12) << "type" << std::setw(16) << "subtype" << std::right << std::setw(8)
            << "count" << std::setw(10) << "expected" << '\n';
  std::ostringstream csv;
  csv << "type,subtype,count,expected,match\n";
  for (const auto& s : counts["subtypes"]) {
    const auto got = s["count"].get<std::size_t>();
    const auto want = s["expected"].get<std::size_t>();
    std::cout << std::left << std::setw(12) << s["type"].get<std::string>() << std::setw(16)
              << s["subtype"].get<std::string>() << std::right << std::setw(8) << got << std::setw(10) << want
              << (got == want ? "" : "  MISMATCH") << '\n';
    csv << s["type"].get<std::string>() << ',' << s["subtype"].get<std::string>() << ',' << got << ',' << want
        << ',' << (got == want ? "true" : "false") << '\n';
  }

  bool schema_is_catalog = d.n_features() == FeatureCatalog::cic_malmem().size();
  bool ok = true;
  std::string problem;
  if (schema_is_catalog && !o.no_count_check) {
    try {
      check_published_counts(d);
    } catch (const ValidationError& e) {
      ok = false;
      problem = e.what();
    }
  }
  auto body = counts;
  body["count_check"] = schema_is_catalog && !o.no_count_check ? (ok ? "pass" : "fail") : "skipped";
  if (rc.wants_json()) {
    emit_json(dir / "counts.json", envelope(rc, "validation", body));
    announce(dir / "counts.json");
  }
  if (rc.wants_csv()) {
    emit_csv(dir / "counts.csv", rc, csv.str());
    announce(dir / "counts.csv");
  }
  if (!ok) {
    std::cerr << "error: " << problem << '\n';
    return kExitData;
  }
  std::cout << "count check: " << body["count_check"].get<std::string>() << '\n';
  return 0;
}

int cmd_stage1(const Options& o) {
  const auto seed = require_seed(o, "stage1");
  const auto d = preprocess(load(o));
  const auto rc = run_config(o, "stage1");
  const auto dir = command_dir(o, "stage1");
  Stage1Options so;
  so.defaults.forest = forest_params(o);
  const auto table = run_stage1(d, seed, so);

  std::cout << "train " << table.train_size << "  test " << table.test_size << '\n';
  std::cout << std::left << std::setw(20) << "classifier" << std::right << std::setw(10) << "accuracy"
            << std::setw(11) << "precision" << std::setw(10) << "recall" << std::setw(10) << "f1" << '\n';
  for (const auto& r : table.rows) {
    std::cout << std::left << std::setw(20) << name(r.kind) << std::right << std::setw(10)
              << fixed(r.metrics.accuracy, 4) << std::setw(11) << fixed(r.metrics.weighted.precision, 4)
              << std::setw(10) << fixed(r.metrics.weighted.recall, 4) << std::setw(10)
              << fixed(r.metrics.weighted.f1, 4) << '\n';
  }
  std::cout << "winner: " << name(table.winner) << '\n';
  if (rc.wants_json()) emit_json(dir / "baselines.json", envelope(rc, "baseline_table", to_json(table)));
  if (rc.wants_csv()) emit_csv(dir / "baselines.csv", rc, baseline_csv(table));

  if (o.cv_folds > 0) {
    ClassifierSpec spec;
    spec.forest = forest_params(o);
    const auto cv = cross_validate(spec, d, o.cv_folds, seed);
    std::cout << o.cv_folds << "-fold CV (RandomForest): mean F1 " << fixed(cv.f1.mean, 6) << "  std "
              << fixed(cv.f1.std, 6) << '\n';
    if (rc.wants_json()) emit_json(dir / "cv.json", envelope(rc, "cross_validation", to_json(cv)));
    if (rc.wants_csv()) emit_csv(dir / "cv.csv", rc, cv_csv(cv));
  }
  std::cout << "outputs in " << dir.string() << '\n';
  return 0;
}

ExperimentConfig experiment_config(const Options& o) {
  ExperimentConfig c;
  c.k = o.k;
  c.forest = forest_params(o);
  c.background_size = o.background;
  if (o.latency) c.latency = LatencyConfig{o.warmup, o.reps, o.batch};
  return c;
}

void print_subtype_line(const SubtypeModelResult& r) {
  std::cout << std::left << std::setw(16) << name(r.subtype) << std::right << " accuracy "
            << fixed(r.metrics.accuracy, 4) << "  recall " << fixed(r.metrics.recall, 4) << "  FN "
            << r.confusion.fn << "  FP " << r.confusion.fp << "  size " << fixed(r.size.serialized_bytes / 1024.0, 2)
            << " KB  features " << join(r.selected.names(), ",") << '\n';
}

json latency_json(const SubtypeModelResult& r) {
  return {{"subtype", name(r.subtype)}, {"latency", to_json(*r.latency)}};
}

int cmd_subtype(const Options& o) {
  if (o.subtype.empty()) throw UsageError("subtype requires --name; valid names: " + valid_subtype_names());
  const auto subtype = require_subtype(o.subtype);
  const auto seed = require_seed(o, "subtype");
  const auto d = preprocess(load(o));
  const auto rc = run_config(o, "subtype");
  const auto dir = command_dir(o, "subtype") / std::string(name(subtype));
  const auto r = run_subtype_experiment(d, subtype, experiment_config(o), seed);
  print_subtype_line(r);

  write_file_atomic(dir / "model.mshd", serialize(r.model));
  emit_json(dir / "model.json", envelope(rc, "subtype_result", to_json(r)));
  write_file_atomic(dir / "background.csv", background_csv(r.background, r.model.feature_names));
  if (rc.wants_csv()) {
    std::ostringstream s;
    s << "rank,feature,importance\n";
    for (std::size_t i = 0; i < r.selected.size(); ++i) {
      s << i + 1 << ',' << r.selected.entries[i].name << ',' << detail::format_double(r.selected.entries[i].score)
        << '\n';
    }
    emit_csv(dir / "features.csv", rc, s.str());
  }
  if (r.latency) {
    emit_json(dir / "timing.json", envelope(rc, "timing", latency_json(r)));
    std::cout << "latency: mean " << fixed(r.latency->mean_us, 3) << " us/instance (reference 5.7 us)\n";
  }
  std::cout << "outputs in " << dir.string() << '\n';
  return 0;
}

int cmd_transfer(const Options& o) {
  const auto seed = require_seed(o, "transfer");
  std::vector<Subtype> subtypes;
  if (!o.subtype.empty()) subtypes.push_back(require_subtype(o.subtype));
  const auto d = preprocess(load(o));
  const auto rc = run_config(o, "transfer");
  const auto dir = command_dir(o, "transfer");
  const auto report = run_transfer_suite(d, experiment_config(o), seed, subtypes);

  json timing = json::array();
  for (std::size_t i : report.ranking) {
    const auto& r = report.results[i];
    std::cout << std::setw(2) << report.rank_of(r.subtype) << ". ";
    print_subtype_line(r);
  }
  for (const auto& r : report.results) {
    const std::string n(name(r.subtype));
    if (rc.wants_json()) emit_json(dir / "results" / (n + ".json"), envelope(rc, "subtype_result", to_json(r)));
    write_file_atomic(dir / "models" / (n + ".mshd"), serialize(r.model));
    if (r.latency) timing.push_back(latency_json(r));
  }
  if (rc.wants_json()) emit_json(dir / "transfer_report.json", envelope(rc, "transfer_report", to_json(report)));
  if (rc.wants_csv()) {
    emit_csv(dir / "summary.csv", rc, transfer_summary_csv(report));
    emit_csv(dir / "feature_frequency.csv", rc, feature_frequency_csv(report, d.catalog));
  }
  // Wall-clock measurements are kept apart from the reproducible reports.
  if (!timing.empty()) emit_json(dir / "timing.json", envelope(rc, "timing", timing));
  std::cout << "selected feature union: " << report.selected_union().size() << " features\n";
  std::cout << "outputs in " << dir.string() << '\n';
  return 0;
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("--k-list expects comma-separated integers, got '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("--k-list is empty");
  return out;
}

int cmd_sweep(const Options& o) {
  const auto subtype = require_subtype(o.subtype.empty() ? std::string("Transponder") : o.subtype);
  const auto seed = require_seed(o, "sweep");
  const auto ks = parse_k_list(o.k_list);
  const auto d = preprocess(load(o));
  auto rc = run_config(o, "sweep");
  rc.subtype_filter = std::string(name(subtype));
  const auto dir = command_dir(o, "sweep");
  auto config = experiment_config(o);
  config.latency.reset();
  const auto r = feature_count_sweep(d, subtype, ks, config, seed);
  std::ostringstream csv;
  csv << "k,accuracy\n";
  for (const auto& [k, a] : r.points) {
    std::cout << "k=" << std::setw(2) << k << "  accuracy " << fixed(a, 4) << '\n';
    csv << k << ',' << detail::format_double(a) << '\n';
  }
  const std::string n(name(subtype));
  if (rc.wants_json()) emit_json(dir / (n + ".json"), envelope(rc, "feature_sweep", to_json(r)));
  if (rc.wants_csv()) emit_csv(dir / (n + ".csv"), rc, csv.str());
  std::cout << "outputs in " << dir.string() << '\n';
  return 0;
}

RandomForestModel load_model(const std::string& path) {
  if (path.empty()) throw UsageError("--model is required");
  const auto bytes = read_file_bytes(path);
  return deserialize(bytes);
}

// Dataset instances projected onto the model's features, in model order.
Dataset instances_for(const RandomForestModel& m, const Options& o) {
  LoadOptions lo;
  lo.count_check = !o.no_count_check;
  return project(load_dataset(o.data, lo), m.feature_names);
}

int cmd_explain(const Options& o) {
  const auto model = load_model(o.model);
  if (o.data.empty()) throw UsageError("explain needs instances: pass --data or set MEMSHIELD_DATA");
  if (!o.beeswarm && !o.instance) throw UsageError("explain needs --instance <row> or --beeswarm");
  auto rc = run_config(o, "explain");
  const auto dir = command_dir(o, "explain");
  const auto d = instances_for(model, o);

  BackgroundSample bg;
  if (!o.background_file.empty()) {
    std::ifstream in(o.background_file);
    if (!in) throw IoError("cannot open '" + o.background_file + "'");
    bg = parse_background_csv(in, model.feature_names);
  } else {
    bg = BackgroundSample::draw(d, o.background, derive_seed(require_seed(o, "explain without --background"), 4));
  }
  rc.background_size = bg.size();
  const auto meta = to_json(rc).dump();

  if (o.beeswarm) {
    const auto seed = require_seed(o, "explain --beeswarm");
    std::vector<std::size_t> idx(d.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(seed, 5));
    rng.shuffle(std::span(idx));
    idx.resize(std::min(o.sample, idx.size()));
    std::sort(idx.begin(), idx.end());
    std::vector<std::vector<double>> xs;
    std::vector<std::size_t> ids;
    for (auto i : idx) {
      xs.push_back(d.instances[i].features);
      ids.push_back(d.instances[i].source_row);
    }
    const auto g = beeswarm_data(model, xs, ids, bg, model.feature_names);
    json body;
    body["background_size"] = g.background_size;
    json order = json::array();
    for (auto j : g.order) order.push_back({{"feature", g.feature_names[j]}, {"mean_abs_phi", g.mean_abs_phi[j]}});
    body["feature_order"] = order;
    json atts = json::array();
    for (const auto& a : g.attributions) atts.push_back(to_json(a, g.feature_names));
    body["attributions"] = atts;
    if (rc.wants_json()) emit_json(dir / "beeswarm.json", envelope(rc, "beeswarm", body));
    if (rc.wants_csv()) {
      std::ostringstream s;
      write_attribution_csv(g, s);
      emit_csv(dir / "beeswarm.csv", rc, s.str());
    }
    write_file_atomic(dir / "beeswarm.svg", render_svg(g, meta));
    std::cout << "explained " << g.attributions.size() << " instances; feature order:";
    for (auto j : g.order) std::cout << ' ' << g.feature_names[j];
    std::cout << '\n';
  } else {
    const auto row = *o.instance;
    auto it = std::find_if(d.instances.begin(), d.instances.end(),
                           [&](const Instance& i) { return i.source_row == row; });
    if (it == d.instances.end()) {
      throw UsageError("--instance " + std::to_string(row) + " is out of range (dataset has " +
                       std::to_string(d.size()) + " rows, numbered from 0)");
    }
    const auto a = exact_shapley(model, it->features, bg, row);
    const auto plot = force_plot_data(a, model.feature_names);
    const std::string stem = "instance_" + std::to_string(row);
    if (rc.wants_json()) emit_json(dir / (stem + ".json"), envelope(rc, "attribution", to_json(a, model.feature_names)));
    if (rc.wants_csv()) {
      std::ostringstream s;
      s << "feature,value,phi,start,end\n";
      for (const auto& seg : plot.segments) {
        s << seg.feature << ',' << detail::format_double(seg.value) << ',' << detail::format_double(seg.phi) << ','
          << detail::format_double(seg.start) << ',' << detail::format_double(seg.end) << '\n';
      }
      emit_csv(dir / (stem + ".csv"), rc, s.str());
    }
    write_file_atomic(dir / (stem + ".svg"), render_svg(plot, meta));
    std::cout << "instance " << row << " (" << name(it->label()) << "): base " << fixed(a.base_value, 4)
              << "  prediction " << fixed(a.prediction, 4) << '\n';
    for (const auto& seg : plot.segments) {
      std::cout << "  " << std::left << std::setw(40) << seg.feature << std::right << std::showpos
                << fixed(seg.phi, 4) << std::noshowpos << '\n';
    }
  }
  std::cout << "outputs in " << dir.string() << '\n';
  return 0;
}

int cmd_bench(const Options& o) {
  const auto model = load_model(o.model);
  if (o.data.empty()) throw UsageError("bench needs instances: pass --data or set MEMSHIELD_DATA");
  const auto rc = run_config(o, "bench");
  const auto dir = command_dir(o, "bench");
  const auto d = instances_for(model, o);
  std::vector<std::vector<double>> xs;
  for (std::size_t i = 0; i < d.size() && i < 1000; ++i) xs.push_back(d.instances[i].features);
  const LatencyConfig lc{o.warmup, o.reps, o.batch};
  const auto lat = measure_latency(model, xs, lc);
  const auto scaling = measure_scaling_latency(ScalerParams::fit(d), xs, lc);
  const auto size = measure_size(model);

  std::cout << std::left << std::setw(28) << "model" << std::right << std::setw(12) << "size (KB)" << std::setw(12)
            << "mean (us)" << std::setw(12) << "median (us)" << std::setw(10) << "p99 (us)" << '\n';
  std::cout << std::left << std::setw(28) << fs::path(o.model).filename().string() << std::right << std::setw(12)
            << fixed(size.serialized_bytes / 1024.0, 2) << std::setw(12) << fixed(lat.mean_us, 3) << std::setw(12)
            << fixed(lat.median_us, 3) << std::setw(10) << fixed(lat.p99_us, 3) << '\n';
  std::cout << std::left << std::setw(28) << "reference" << std::right << std::setw(12) << "339.59" << std::setw(12)
            << "5.700" << '\n';
  std::cout << lat.n_predictions << " timed predictions in batches of " << lat.batch_size << " after "
            << lat.warmup_count << " warm-up; " << lat.hardware
            << (lat.low_resolution ? " (low-resolution timer)" : "") << '\n';
  std::cout << "min-max scaling, not included above: " << fixed(scaling.mean_us, 3) << " us/instance\n";
  json body{{"model", fs::path(o.model).filename().string()},
            {"size", to_json(size)},
            {"latency", to_json(lat)},
            {"scaling_latency", to_json(scaling)}};
  body["scaling_latency"].erase("reference_mean_us");
  if (o.throughput_threads) {
    const auto tp = measure_throughput(model, xs, o.reps, *o.throughput_threads);
    std::cout << "parallel throughput: " << fixed(tp.predictions_per_second, 0) << " predictions/s on " << tp.threads
              << " threads\n";
    body["throughput"] = to_json(tp);
  }
  body["size"]["reference_kb"] = 339.59;
  emit_json(dir / "bench.json", envelope(rc, "bench", body));
  return 0;
}

std::vector<Subtype> parse_subtype_list(const std::string& text) {
  if (detail::lower(text) == "all") return all_subtypes();
  std::vector<Subtype> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) out.push_back(require_subtype(std::string(detail::trim(item))));
  if (out.empty()) throw UsageError("--subtypes is empty");
  return out;
}

int cmd_fixture(const Options& o) {
  const auto seed = require_seed(o, "fixture");
  Dataset d;
  if (o.cic_scale) {
    d = make_cic_fixture(*o.cic_scale, seed);
  } else {
    FixtureSpec spec;
    spec.n_benign = o.n_benign;
    spec.n_per_subtype = o.n_per_subtype;
    spec.n_features = o.n_features;
    if (o.n_informative) spec.n_informative = *o.n_informative;
    spec.separation = o.separation;
    spec.subtypes = parse_subtype_list(o.fixture_subtypes);
    d = make_fixture(spec, seed);
  }
  std::ostringstream s;
  write_csv(d, s);
  const auto path = command_dir(o, "fixture") / o.fixture_name;
  write_file_atomic(path, s.str());
  std::cout << "wrote " << d.size() << " instances (" << d.count(Label::Benign) << " benign, "
            << d.count(Label::Malware) << " malware, " << d.n_features() << " features) to " << path.string()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memshield: memory-forensics malware detection with subtype-transfer evaluation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  Options o;
  if (const char* env = std::getenv("MEMSHIELD_DATA")) o.data = env;

  auto common = [&](CLI::App* c) {
    c->add_option("--data", o.data, "Dataset CSV (default: $MEMSHIELD_DATA)");
    c->add_option("--out", o.out, "Output root; files go to <out>/<command>/")->capture_default_str();
    c->add_option("--format", o.format, "Report format")
        ->check(CLI::IsMember({"json", "csv", "both"}))
        ->capture_default_str();
    c->add_flag("--no-count-check", o.no_count_check, "Skip the published-count check on load");
  };
  auto training = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "Seed for every random choice (required)");
    c->add_option("--trees", o.trees, "Trees per forest")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--threads", o.threads, "Training threads (0 = all cores); never changes results")
        ->capture_default_str();
    c->add_flag("--hard-vote", o.hard_vote, "Majority vote instead of averaged probabilities");
  };
  auto selection = [&](CLI::App* c) {
    c->add_option("--k", o.k, "Number of selected features")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--background", o.background, "Background sample size for explanations")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    c->add_flag("--latency", o.latency, "Also measure prediction latency (written to timing.json)");
  };

  auto* validate = app.add_subcommand("validate", "Load the dataset and check counts against published totals");
  common(validate);

  auto* stage1 = app.add_subcommand("stage1", "Compare classifiers on a stratified 80/20 split");
  common(stage1);
  training(stage1);
  stage1->add_option("--cv", o.cv_folds, "Also run k-fold cross-validation of the forest (0 = skip)")
      ->capture_default_str();

  auto* subtype = app.add_subcommand("subtype", "Train on one subtype plus benign, test on everything else");
  common(subtype);
  training(subtype);
  selection(subtype);
  subtype->add_option("--name", o.subtype, "Training subtype, e.g. Transponder");

  auto* transfer = app.add_subcommand("transfer", "Run the single-subtype experiment for every subtype");
  common(transfer);
  training(transfer);
  selection(transfer);
  transfer->add_option("--name", o.subtype, "Restrict to one subtype");

  auto* sweep = app.add_subcommand("sweep", "Accuracy of a subtype model as the feature count varies");
  common(sweep);
  training(sweep);
  sweep->add_option("--name", o.subtype, "Training subtype (default Transponder)");
  sweep->add_option("--k-list", o.k_list, "Comma-separated feature counts")->capture_default_str();

  auto* explain = app.add_subcommand("explain", "Shapley attributions for a saved model");
  common(explain);
  explain->add_option("--seed", o.seed, "Seed for sampling instances or the background");
  explain->add_option("--model", o.model, "Model file (.mshd)")->required();
  explain->add_option("--background", o.background_file, "Background CSV written by `subtype`");
  explain->add_option("--background-size", o.background, "Rows drawn from --data when no background file is given")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  auto* inst = explain->add_option("--instance", o.instance, "Row index (0-based) of the instance to explain");
  auto* bees = explain->add_flag("--beeswarm", o.beeswarm, "Explain a random sample instead of one instance");
  inst->excludes(bees);
  explain->add_option("--sample", o.sample, "Instances in the beeswarm sample")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Prediction latency and serialized size of a saved model");
  common(bench);
  bench->add_option("--model", o.model, "Model file (.mshd)")->required();
  bench->add_option("--reps", o.reps, "Timed predictions")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--warmup", o.warmup, "Untimed warm-up predictions")->capture_default_str();
  bench->add_option("--batch", o.batch, "Predictions per timed batch")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench->add_option("--throughput-threads", o.throughput_threads,
                    "Also measure parallel throughput on this many threads (0 = all cores)");

  auto* fixture = app.add_subcommand("fixture", "Write a synthetic dataset CSV");
  fixture->add_option("--out", o.out, "Output root; the file goes to <out>/fixture/")->capture_default_str();
  fixture->add_option("--seed", o.seed, "Generator seed (required)");
  fixture->add_option("--file", o.fixture_name, "File name")->capture_default_str();
  fixture->add_option("--benign", o.n_benign, "Benign instances")->capture_default_str();
  fixture->add_option("--per-subtype", o.n_per_subtype, "Instances per malware subtype")->capture_default_str();
  fixture->add_option("--features", o.n_features, "Feature columns")->capture_default_str();
  fixture->add_option("--informative", o.n_informative, "Features carrying class signal (default all)");
  fixture->add_option("--separation", o.separation, "Class separation in noise standard deviations")
      ->capture_default_str();
  fixture->add_option("--subtypes", o.fixture_subtypes, "'all' or comma-separated subtype names")
      ->capture_default_str();
  fixture->add_option("--cic-scale", o.cic_scale,
                      "Write a surrogate with the full 55-column schema and published counts times this scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*validate) return cmd_validate(o);
    if (*stage1) return cmd_stage1(o);
    if (*subtype) return cmd_subtype(o);
    if (*transfer) return cmd_transfer(o);
    if (*sweep) return cmd_sweep(o);
    if (*explain) return cmd_explain(o);
    if (*bench) return cmd_bench(o);
    if (*fixture) return cmd_fixture(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nrun with --help for options\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
