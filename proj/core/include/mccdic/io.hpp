#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>

#include "mccdic/tensor.hpp"

namespace mccdic {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// MCT1 layout: magic "MCT1", u32 LE rank, rank x u64 LE dims, f64 LE payload.
void write_mct(std::ostream& os, const Tensor& t);
Tensor read_mct(std::istream& is);
void save_mct(const std::filesystem::path& path, const Tensor& t);
Tensor load_mct(const std::filesystem::path& path);

struct PgmScale {
  double min = 0.0;
  double max = 0.0;
};

/// Writes an 8-bit binary PGM, min-max scaled. Returns the scale used so it
/// can be recorded next to the dump.
PgmScale save_pgm(const std::filesystem::path& path, const Tensor& image);

/// Plain-text `key = value` files. '#' starts a comment; blank lines ignored.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(std::istream& is);
KeyValues load_key_values(const std::filesystem::path& path);
void save_key_values(const std::filesystem::path& path, const KeyValues& kv);

}  // namespace mccdic
