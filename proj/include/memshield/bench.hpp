#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "memshield/classifier.hpp"
#include "memshield/forest.hpp"
#include "memshield/serialize.hpp"

namespace memshield {

struct LatencyConfig {
  std::size_t warmup = 1000;
  std::size_t reps = 100000;
  std::size_t batch_size = 1000;
};

struct LatencyReport {
  std::size_t n_predictions = 0;  // timed predictions, warmup excluded
  std::size_t warmup_count = 0;
  std::size_t batch_size = 0;
  double mean_us = 0.0;
  double median_us = 0.0;
  double p99_us = 0.0;
  double timer_resolution_ns = 0.0;
  bool low_resolution = false;  // timer coarser than 1 us; only the batch mean is meaningful
  std::string hardware;
  std::uint64_t checksum = 0;  // consumed so the optimiser keeps every prediction
};

struct SizeReport {
  std::size_t serialized_bytes = 0;
  std::size_t node_count = 0;
  std::size_t tree_count = 0;
};

inline std::string hardware_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      auto colon = line.find(':');
      if (colon != std::string::npos) cpu = std::string(detail::trim(line.substr(colon + 1)));
      break;
    }
  }
  return cpu + ", " + std::to_string(std::max(1u, std::thread::hardware_concurrency())) + " hardware threads";
}

namespace detail {

// Batch timing: calls are timed in batches and each batch time is divided by
// its size. Instances are cycled until reps calls are done. op returns a value
// folded into the checksum so the optimiser cannot drop the work.
template <typename Op>
LatencyReport time_batches(const std::vector<std::vector<double>>& instances, const LatencyConfig& config, Op op) {
  if (instances.empty()) throw PreconditionError("latency measurement needs at least one instance");
  if (config.reps == 0) throw PreconditionError("latency measurement needs reps > 0");
  if (config.batch_size == 0) throw PreconditionError("batch_size must be > 0");
  using Clock = std::chrono::steady_clock;

  LatencyReport report;
  report.warmup_count = config.warmup;
  report.batch_size = std::min(config.batch_size, config.reps);
  report.timer_resolution_ns = 1e9 * static_cast<double>(Clock::period::num) / static_cast<double>(Clock::period::den);
  report.low_resolution = report.timer_resolution_ns > 1000.0;
  report.hardware = hardware_descriptor();

  std::uint64_t checksum = 0;
  std::size_t cursor = 0;
  auto next = [&]() -> const std::vector<double>& {
    const auto& x = instances[cursor];
    cursor = (cursor + 1) % instances.size();
    return x;
  };
  for (std::size_t i = 0; i < config.warmup; ++i) checksum += op(next());

  std::vector<double> per_instance;
  std::size_t done = 0;
  double total_us = 0.0;
  while (done < config.reps) {
    const auto batch = std::min(report.batch_size, config.reps - done);
    const auto start = Clock::now();
    for (std::size_t i = 0; i < batch; ++i) checksum += op(next());
    const auto stop = Clock::now();
    const double us = std::chrono::duration<double, std::micro>(stop - start).count();
    total_us += us;
    per_instance.push_back(us / static_cast<double>(batch));
    done += batch;
  }
  report.n_predictions = done;
  report.mean_us = total_us / static_cast<double>(done);
  std::sort(per_instance.begin(), per_instance.end());
  report.median_us = per_instance[per_instance.size() / 2];
  const auto p99_index = std::min(per_instance.size() - 1,
                                  static_cast<std::size_t>(0.99 * static_cast<double>(per_instance.size())));
  report.p99_us = per_instance[p99_index];
  report.checksum = checksum;
  return report;
}

}  // namespace detail

// Model inference only; feature scaling is not part of the timed call.
template <Predictor M>
LatencyReport measure_latency(const M& model, const std::vector<std::vector<double>>& instances,
                              const LatencyConfig& config = {}) {
  return detail::time_batches(instances, config, [&](const std::vector<double>& x) -> std::uint64_t {
    return model.predict(x).label == Label::Malware;
  });
}

// Cost of min-max scaling one instance, reported next to inference latency.
// Includes copying the instance into a reused buffer.
inline LatencyReport measure_scaling_latency(const ScalerParams& scaler,
                                             const std::vector<std::vector<double>>& instances,
                                             const LatencyConfig& config = {}) {
  if (!instances.empty() && instances.front().size() != scaler.size()) {
    throw DimensionError("scaler has " + std::to_string(scaler.min.size()) + " features, instances have " +
                            std::to_string(instances.front().size()));
  }
  std::vector<double> buffer;
  return detail::time_batches(instances, config, [&](const std::vector<double>& x) -> std::uint64_t {
    buffer.assign(x.begin(), x.end());
    scaler.transform_in_place(buffer);
    return buffer.front() > 0.5;
  });
}

struct ThroughputReport {
  std::size_t threads = 0;
  std::size_t n_predictions = 0;
  double wall_seconds = 0.0;
  double predictions_per_second = 0.0;
  std::uint64_t checksum = 0;
};

// Parallel mode: reps predictions split across threads, timed by wall clock.
// Kept apart from LatencyReport, whose numbers are single-threaded.
template <Predictor M>
ThroughputReport measure_throughput(const M& model, const std::vector<std::vector<double>>& instances,
                                    std::size_t reps, std::size_t threads) {
  if (instances.empty()) throw PreconditionError("throughput measurement needs at least one instance");
  if (reps == 0) throw PreconditionError("throughput measurement needs reps > 0");
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, reps);
  std::vector<std::uint64_t> sums(threads, 0);
  auto work = [&](std::size_t t) {
    const std::size_t begin = reps * t / threads, end = reps * (t + 1) / threads;
    std::uint64_t local = 0;
    for (std::size_t i = begin; i < end; ++i) {
      local += model.predict(instances[i % instances.size()]).label == Label::Malware;
    }
    sums[t] = local;
  };
  const auto start = std::chrono::steady_clock::now();
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(work, t);
    work(0);
  }
  const auto stop = std::chrono::steady_clock::now();

  ThroughputReport r;
  r.threads = threads;
  r.n_predictions = reps;
  r.wall_seconds = std::chrono::duration<double>(stop - start).count();
  r.predictions_per_second = r.wall_seconds > 0.0 ? static_cast<double>(reps) / r.wall_seconds : 0.0;
  for (auto v : sums) r.checksum += v;
  return r;
}

inline SizeReport measure_size(const RandomForestModel& model) {
  return {serialize(model).size(), model.node_count(), model.trees.size()};
}

}  // namespace memshield
