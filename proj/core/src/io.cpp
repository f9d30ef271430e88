#include "mccdic/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace mccdic {

namespace {

constexpr std::array<char, 4> kMagic{'M', 'C', 'T', '1'};
constexpr std::uint32_t kMaxRank = 16;

template <class T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw FormatError("mct: truncated stream");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void write_mct(std::ostream& os, const Tensor& t) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint64_t>(os, d);
  for (double v : t.data()) put_le<double>(os, v);
  if (!os) throw FormatError("mct: write failed");
}

Tensor read_mct(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError("mct: bad magic");
  }
  const auto rank = get_le<std::uint32_t>(is);
  if (rank > kMaxRank) throw FormatError("mct: rank " + std::to_string(rank) + " too large");
  Shape shape(rank);
  for (auto& d : shape) d = get_le<std::uint64_t>(is);
  std::vector<double> data(shape_product(shape));
  for (auto& v : data) v = get_le<double>(is);
  return Tensor(std::move(shape), std::move(data));
}

void save_mct(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("mct: cannot open " + path.string() + " for writing");
  write_mct(os, t);
}

Tensor load_mct(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("mct: cannot open " + path.string());
  return read_mct(is);
}

PgmScale save_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 2) throw ShapeError("pgm: image must be rank 2");
  PgmScale scale;
  if (!image.empty()) {
    const auto [lo, hi] = std::minmax_element(image.data().begin(), image.data().end());
    scale = {*lo, *hi};
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("pgm: cannot open " + path.string());
  os << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  const double range = scale.max - scale.min;
  for (double v : image.data()) {
    const double u = range > 0.0 ? (v - scale.min) / range : 0.0;
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(u * 255.0))));
  }
  return scale;
}

KeyValues parse_key_values(std::istream& is) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    kv[std::move(key)] = std::move(value);
  }
  return kv;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  return parse_key_values(is);
}

void save_key_values(const std::filesystem::path& path, const KeyValues& kv) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
}

}  // namespace mccdic
