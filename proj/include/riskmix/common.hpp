#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace riskmix {

// Thrown on malformed input files; message carries file and line context.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Deterministic random source. mt19937_64 output is fully specified by the
// standard and every distribution below is hand-rolled from raw bits, so a
// given seed produces the same draws on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_bits();
  // Uniform on [0, 1), 53 bits of precision.
  double uniform01();
  double uniform(double lo, double hi);
  // Box-Muller; two uniforms consumed per call.
  double normal();
  double normal(double mean, double stddev);
  bool bernoulli(double p);
  // Uniform integer in [0, n); n must be > 0.
  std::size_t below(std::size_t n);
  // Index drawn according to `probs` (need not be exactly normalized).
  int categorical(std::span<const double> probs);
  // Independent substream derived from this generator's seed, not its state.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

double log_sum_exp(std::span<const double> xs);

// Shortest decimal form that round-trips to the same double.
std::string format_double(double value);

// Runs body(i) for i in [0, n) across a fixed static partition of worker
// threads. Each index writes only its own output slot, so results do not
// depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

std::string read_file(const std::string& path);
// Writes to a temporary sibling then renames, so readers never observe a
// partially written file.
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace riskmix
