#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace degkit {

/// Identifies a reproducible random stream. Streams with the same
/// (seed, stream_id) produce identical draws.
struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  /// Derive a child stream keyed by a purpose tag and an index (e.g. unit
  /// index), so that per-unit draws do not depend on execution order.
  RngSpec child(std::uint64_t tag, std::uint64_t index = 0) const;

  bool operator==(const RngSpec&) const = default;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Stream tags used across modules.
namespace tag {
inline constexpr std::uint64_t kUnit = 0x756e6974;
inline constexpr std::uint64_t kOmega = 0x6f6d6567;
inline constexpr std::uint64_t kPath = 0x70617468;
inline constexpr std::uint64_t kNoise = 0x6e6f6973;
inline constexpr std::uint64_t kEStep = 0x65737470;
inline constexpr std::uint64_t kRestart = 0x72737472;
inline constexpr std::uint64_t kChain = 0x63686e6e;
inline constexpr std::uint64_t kSplit = 0x73706c74;
inline constexpr std::uint64_t kMisc = 0x6d697363;
}  // namespace tag

/// The single generator used repo-wide: a 64-bit Mersenne Twister seeded
/// from a splitmix64 hash of the stream spec.
class Rng {
 public:
  explicit Rng(const RngSpec& spec);

  using result_type = std::mt19937_64::result_type;
  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double gamma(double shape, double scale);
  double exponential(double rate);
  std::size_t index(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace degkit
