#include "xmatch/common.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace xmatch {

namespace {

// splitmix64; also used to derive fork seeds
std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::next_double() {
  return (next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::next_below(std::uint64_t n) {
  if (n == 0) throw ContractError("Rng::next_below: n must be positive");
  // rejection sampling to avoid modulo bias
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

double Rng::next_normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = next_double();
  } while (u1 <= 0.0);
  u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

Rng Rng::fork(std::uint64_t stream_id) const {
  std::uint64_t s = state_ ^ (0xa0761d6478bd642fULL + stream_id * 0xe7037ed1a0b428dbULL);
  splitmix64(s);
  return Rng(s);
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for hashing: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

void Manifest::set(const std::string& key, const std::string& value) {
  entries.emplace_back(key, value);
}

void Manifest::set_u64(const std::string& key, std::uint64_t value) {
  set(key, std::to_string(value));
}

bool Manifest::has(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return true;
  return false;
}

const std::string& Manifest::get(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  throw IoError("manifest: missing key '" + key + "'");
}

std::uint64_t Manifest::get_u64(const std::string& key) const {
  const std::string& s = get(key);
  try {
    std::size_t pos = 0;
    std::uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("manifest: key '" + key + "' is not an integer: " + s);
  }
}

void Manifest::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path);
  for (const auto& [k, v] : entries) out << k << "=" << v << "\n";
  if (!out) throw IoError("short write on manifest: " + path);
}

Manifest Manifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest: " + path);
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("manifest: malformed line '" + line + "'");
    m.entries.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return m;
}

static_assert(sizeof(float) == 4);
static_assert(std::endian::native == std::endian::little,
              "on-disk feature blocks are little-endian f32");

void write_f32_block(const std::string& path, const std::vector<std::vector<float>>& blocks) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write feature block: " + path);
  for (const auto& b : blocks) {
    out.write(reinterpret_cast<const char*>(b.data()),
              static_cast<std::streamsize>(b.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write on feature block: " + path);
}

std::vector<std::vector<float>> read_f32_blocks(const std::string& path,
                                                const std::vector<std::size_t>& sizes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read feature block: " + path);
  std::vector<std::vector<float>> out;
  out.reserve(sizes.size());
  for (std::size_t n : sizes) {
    std::vector<float> b(n);
    in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != n * sizeof(float))
      throw IoError("feature block truncated: " + path);
    out.push_back(std::move(b));
  }
  // trailing bytes mean the manifest disagrees with the block file
  char probe;
  in.read(&probe, 1);
  if (in.gcount() != 0) throw IoError("feature block has trailing bytes: " + path);
  return out;
}

}  // namespace xmatch
