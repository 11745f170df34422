/**
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace attnet {

  constexpr uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  /// Folds a seed and any number of stream labels into one 64-bit seed.
  inline uint64_t derive_seed(uint64_t seed, std::initializer_list<uint64_t> labels) {
    uint64_t h = splitmix64(seed);
    for (auto l : labels) {
      h = splitmix64(h ^ splitmix64(l + 0x632be59bd9b4e019ULL));
    }
    return h;
  }

  // Stream tags, one per consumer of randomness.
  enum class Stream : uint64_t {
    kShuffle = 1,
    kAggregator,
    kStaticSubnets,
    kMesh,
    kObserverPeers,
    kFanout,
    kObserverFanout,
    kDrop,
    kOriginDelay,
    kRelayOrder,
    kHosting,
    kLabels,
    kDynamicGraft,
  };

  /// The artifact's single generator: mt19937_64 with bounded sampling done
  /// here rather than through std distributions, whose output is
  /// implementation-defined.
  class Rng {
   public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    Rng(uint64_t seed, Stream stream, std::initializer_list<uint64_t> labels = {})
        : engine_(derive(seed, stream, labels)) {}

    uint64_t next() {
      return engine_();
    }

    /// Uniform integer in [0, bound); bound must be > 0.
    uint64_t below(uint64_t bound) {
      // rejection sampling on the top of the range
      const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
      uint64_t x;
      do {
        x = engine_();
      } while (x >= limit);
      return x % bound;
    }

    /// Uniform real in [0, 1) with 53 bits of precision.
    double unit() {
      return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    bool chance(double p) {
      if (p <= 0.0) {
        return false;
      }
      if (p >= 1.0) {
        return true;
      }
      return unit() < p;
    }

    template <typename T>
    void shuffle(std::span<T> items) {
      for (size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[below(i)]);
      }
    }

   private:
    static uint64_t derive(uint64_t seed, Stream stream,
                           std::initializer_list<uint64_t> labels) {
      uint64_t h = derive_seed(seed, {static_cast<uint64_t>(stream)});
      for (auto l : labels) {
        h = splitmix64(h ^ splitmix64(l + 0x632be59bd9b4e019ULL));
      }
      return h;
    }

    std::mt19937_64 engine_;
  };

}  // namespace attnet
