#include <cstdio>
#include <fstream>
#include <sstream>

#include "mccdic/degrade.hpp"
#include "mccdic/metrics.hpp"
#include "mccdic_cli/cli.hpp"

namespace mccdic::cli {

namespace {

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string padded_index(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return buf;
}

std::vector<std::string> indexed(const KeyValues& kv, const std::string& prefix) {
  std::vector<std::string> out;
  for (auto it = kv.lower_bound(prefix); it != kv.end() && it->first.rfind(prefix, 0) == 0; ++it) {
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

void RunManifest::save(const std::filesystem::path& path) const {
  KeyValues kv;
  kv["command"] = command;
  kv["tool_version"] = kToolVersion;
  kv["wall_clock_s"] = number(wall_clock_s);
  for (std::size_t i = 0; i < argv.size(); ++i) kv["argv." + padded_index(i)] = '"' + argv[i] + '"';
  for (const auto& [k, v] : params) kv["param." + k] = '"' + v + '"';
  for (std::size_t i = 0; i < inputs.size(); ++i) kv["input." + padded_index(i)] = '"' + inputs[i] + '"';
  for (std::size_t i = 0; i < outputs.size(); ++i) kv["output." + padded_index(i)] = '"' + outputs[i] + '"';
  save_key_values(path, kv);
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  const KeyValues kv = load_key_values(path);
  RunManifest m;
  if (auto it = kv.find("command"); it != kv.end()) m.command = it->second;
  m.argv = indexed(kv, "argv.");
  if (m.argv.empty()) throw FormatError(path.string() + ": no argv entries");
  for (auto it = kv.lower_bound("param."); it != kv.end() && it->first.rfind("param.", 0) == 0; ++it) {
    m.params[it->first.substr(6)] = it->second;
  }
  m.inputs = indexed(kv, "input.");
  m.outputs = indexed(kv, "output.");
  if (auto it = kv.find("wall_clock_s"); it != kv.end()) m.wall_clock_s = std::stod(it->second);
  return m;
}

DegradeMode parse_mode(const std::string& name) {
  if (name == "none") return DegradeMode::none;
  if (name == "sr") return DegradeMode::sr;
  if (name == "recon") return DegradeMode::recon;
  throw std::invalid_argument("unknown degradation mode '" + name + "' (expected none, sr or recon)");
}

Degraded degrade_image(const Tensor& hr, const DegradeParams& p) {
  switch (p.mode) {
    case DegradeMode::none:
      return {hr, Tensor()};
    case DegradeMode::sr: {
      Tensor lr = kspace_center_crop_lr(hr, p.scale);
      Tensor up = upsample_zero_pad(lr, p.scale);
      return {std::move(up), std::move(lr)};
    }
    case DegradeMode::recon: {
      const auto mask = make_cartesian_mask(hr.rows(), hr.cols(), p.accel, p.center_frac, p.mask_seed);
      return {undersample(hr, mask), mask.mask};
    }
  }
  throw std::logic_error("unreachable degradation mode");
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<ObjectiveTerms>& trace) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "iter,objective,fid1,fid2,l1_c,l1_u,l1_v\n";
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const auto& e = trace[t];
    os << t << ',' << number(e.total) << ',' << number(e.fid1) << ',' << number(e.fid2) << ','
       << number(e.l1_c) << ',' << number(e.l1_u) << ',' << number(e.l1_v) << '\n';
  }
}

void write_report_csv(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::pair<Tensor, Tensor>>>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "name,psnr,ssim,rmse,rmse_x100\n";
  for (const auto& [name, images] : rows) {
    const auto& [rec, gt] = images;
    const double e = rmse(rec, gt);
    os << name << ',' << number(psnr(rec, gt)) << ',' << number(ssim(rec, gt)) << ',' << number(e) << ','
       << number(100.0 * e) << '\n';
  }
}

}  // namespace mccdic::cli
