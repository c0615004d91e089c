#pragma once

#include <cstdint>

#include <Eigen/Dense>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

namespace sudfer {

using Engine = boost::random::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Child seed for sub-stream `stream` of `seed`. Used for shards, trials and
/// the independent X/Y streams; distinct streams are decorrelated by two
/// rounds of splitmix64.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

/// Fills `z` column by column with iid N(0,1) variates (ziggurat).
inline void fill_standard_normal(Eigen::MatrixXd& z, Engine& engine) {
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  double* data = z.data();
  const Eigen::Index size = z.size();
  for (Eigen::Index k = 0; k < size; ++k) data[k] = normal(engine);
}

}  // namespace sudfer
