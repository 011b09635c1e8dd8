#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace xmatch {

// Error taxonomy. Config errors map to CLI exit code 2, the rest to 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MiningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic RNG. mt19937_64 plus a hand-rolled Box-Muller so that the
// generated streams are identical across standard library implementations
// (std::normal_distribution is not pinned by the standard).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // uniform in [0, 1)
  double next_double();

  // uniform integer in [0, n)
  std::uint64_t next_below(std::uint64_t n);

  // standard normal
  double next_normal();

  // derive an independent stream for a named purpose
  Rng fork(std::uint64_t stream_id) const;

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a over a file's bytes, hex-encoded. Used to stamp offline indexes
// with the checkpoint they were built from.
std::string file_hash_hex(const std::string& path);

// Line-based key=value manifest files.
struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;

  void set(const std::string& key, const std::string& value);
  void set_u64(const std::string& key, std::uint64_t value);
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;  // throws IoError
  std::uint64_t get_u64(const std::string& key) const;

  void save(const std::string& path) const;
  static Manifest load(const std::string& path);
};

// Raw little-endian f32 blocks.
void write_f32_block(const std::string& path, const std::vector<std::vector<float>>& blocks);
// Reads consecutive blocks of the given sizes; throws IoError("...truncated")
// if the file is too short and IoError on trailing bytes.
std::vector<std::vector<float>> read_f32_blocks(const std::string& path,
                                                const std::vector<std::size_t>& sizes);

inline double hinge(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace xmatch
