#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace eatta {

/// FNV-1a over the bytes of a name; used to key named substreams.
std::uint64_t hash_name(std::string_view name);

/// Order-sensitive mixing of several 64-bit words into one seed.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

/// Random source with platform-independent distributions.
///
/// The engine is std::mt19937_64; uniform and normal draws are computed here
/// rather than through <random> distributions, whose output differs between
/// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n); n must be > 0.
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Splits one master seed into independent named substreams.
///
/// A substream is identified by a name and an optional list of integer keys,
/// so e.g. the perturbation noise for (domain, batch, sample) never depends on
/// how many draws some other subsystem made before it.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t master) : master_(master) {}

  std::uint64_t master() const { return master_; }
  std::uint64_t seed_for(std::string_view name, std::initializer_list<std::uint64_t> keys = {}) const;
  Rng stream(std::string_view name, std::initializer_list<std::uint64_t> keys = {}) const {
    return Rng(seed_for(name, keys));
  }

 private:
  std::uint64_t master_;
};

}  // namespace eatta
