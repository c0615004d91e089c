#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "sudfer/error.hpp"
#include "sudfer/random.hpp"

namespace sudfer {

/// A Monte Carlo mean with its CLT standard error (sample sd / sqrt(samples)).
struct MCEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

/// Welford accumulator; `merge` is Chan's pairwise update.
struct RunningMoments {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x) noexcept {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  void merge(const RunningMoments& other) noexcept {
    if (other.count == 0) return;
    if (count == 0) {
      *this = other;
      return;
    }
    const double na = static_cast<double>(count);
    const double nb = static_cast<double>(other.count);
    const double n = na + nb;
    const double delta = other.mean - mean;
    mean += delta * (nb / n);
    m2 += other.m2 + delta * delta * (na * nb / n);
    count += other.count;
  }

  double sample_variance() const noexcept {
    return count > 1 ? std::max(0.0, m2 / static_cast<double>(count - 1)) : 0.0;
  }
};

namespace parallel {

inline std::atomic<unsigned>& worker_override() {
  static std::atomic<unsigned> value{0};
  return value;
}

/// 0 restores the default (hardware concurrency).
inline void set_max_workers(unsigned workers) { worker_override().store(workers); }

inline unsigned max_workers() {
  const unsigned forced = worker_override().load();
  if (forced != 0) return forced;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(shard) for shard in [0, shards) on up to max_workers() threads.
/// Shards are claimed dynamically; callers must write results by shard index.
template <class Body>
void for_each_shard(std::size_t shards, Body&& body) {
  const std::size_t workers =
      std::min<std::size_t>(max_workers(), std::max<std::size_t>(shards, 1));
  if (workers <= 1) {
    for (std::size_t s = 0; s < shards; ++s) body(s);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t s = next++; s < shards; s = next++) body(s);
        } catch (...) {
          errors[w] = std::current_exception();
          next = shards;
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace parallel

/// Fixed partition of a batch into shards. Depends only on (dimension,
/// count), never on the worker count, so results are reproducible.
struct ShardPlan {
  std::size_t rows_per_shard;
  std::size_t shards;

  ShardPlan(std::size_t dimension, std::size_t count) {
    constexpr std::size_t kTargetDoubles = std::size_t{1} << 18;
    rows_per_shard = std::clamp<std::size_t>(kTargetDoubles / std::max<std::size_t>(dimension, 1),
                                             1, 4096);
    shards = (count + rows_per_shard - 1) / rows_per_shard;
  }

  std::size_t begin(std::size_t shard) const { return shard * rows_per_shard; }
  std::size_t rows(std::size_t shard, std::size_t count) const {
    return std::min(rows_per_shard, count - begin(shard));
  }
};

/// Standard normal block for one shard: dimension x rows, one draw per column.
inline Eigen::MatrixXd shard_normals(std::size_t dimension, std::size_t rows,
                                     std::uint64_t seed, std::size_t shard) {
  Engine engine(derive_seed(seed, shard));
  Eigen::MatrixXd z(static_cast<Eigen::Index>(dimension), static_cast<Eigen::Index>(rows));
  fill_standard_normal(z, engine);
  return z;
}

/// Generic Monte Carlo driver. `per_sample(z, out)` receives the standard
/// normal block of one shard (dimension x rows) and must write one statistic
/// per column into `out`. Shard moments are merged in shard order.
template <class PerSample>
MCEstimate mc_estimate(std::size_t dimension, std::size_t samples, std::uint64_t seed,
                       PerSample&& per_sample) {
  if (samples < 2)
    throw Error(ErrorCode::InvalidParameter, "Monte Carlo estimates need at least 2 samples");
  const ShardPlan plan(dimension, samples);
  std::vector<RunningMoments> partial(plan.shards);
  parallel::for_each_shard(plan.shards, [&](std::size_t shard) {
    const std::size_t rows = plan.rows(shard, samples);
    const Eigen::MatrixXd z = shard_normals(dimension, rows, seed, shard);
    std::vector<double> values(rows);
    per_sample(z, std::span<double>(values));
    RunningMoments acc;
    for (double v : values) acc.push(v);
    partial[shard] = acc;
  });
  RunningMoments total;
  for (const auto& p : partial) total.merge(p);
  return MCEstimate{total.mean,
                    std::sqrt(total.sample_variance() / static_cast<double>(total.count)),
                    total.count, seed};
}

}  // namespace sudfer
