#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mccdic/io.hpp"
#include "mccdic/solver.hpp"

namespace mccdic::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Runs the command line; returns the process exit code.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

/// Written next to the outputs of every command. `argv` alone is enough to
/// re-run the command (see `mccdic replay`).
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  KeyValues params;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double wall_clock_s = 0.0;

  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

/// Raised by the pipeline with the name of the failing stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

enum class DegradeMode { none, sr, recon };
DegradeMode parse_mode(const std::string& name);

struct DegradeParams {
  DegradeMode mode = DegradeMode::sr;
  std::size_t scale = 4;
  double accel = 4.0;
  double center_frac = 0.08;
  std::uint64_t mask_seed = 7;
};

/// Full-resolution solver input and its baseline (zero-padded or
/// zero-filled), plus the low-resolution image or mask that produced it.
struct Degraded {
  Tensor target;
  Tensor side;  // LR image (sr) or sampling mask (recon)
};
Degraded degrade_image(const Tensor& hr, const DegradeParams& p);

/// `key = value` pipeline configuration. Unknown keys are rejected.
struct PipelineConfig {
  std::filesystem::path out_dir;
  std::uint64_t seed = 1;
  std::size_t size = 64;
  std::size_t n_ellipses = 6;
  bool inconsistent = false;
  DegradeParams degrade;
  std::size_t train_pairs = 4;
  int epochs = 5;
  std::size_t batch_size = 0;
  std::vector<std::size_t> widths{8, 12};
  std::size_t filter_size = 3;
  int recon_base_steps = 500;
  std::optional<std::filesystem::path> dict;
  SolverConfig solver;
  bool dump_components = true;

  static PipelineConfig from_key_values(const KeyValues& kv, const std::filesystem::path& base_dir);
  KeyValues to_key_values() const;
};

struct PipelineResult {
  double psnr_baseline = 0.0, psnr = 0.0;
  double ssim_baseline = 0.0, ssim = 0.0;
  std::vector<std::string> outputs;
};

/// phantom -> degrade -> learn -> solve -> eval -> decompose. On failure the
/// outputs written so far are removed and a StageError is thrown.
PipelineResult run_pipeline(const PipelineConfig& cfg);

/// CSV writers shared by the commands; fixed column order.
void write_trace_csv(const std::filesystem::path& path, const std::vector<ObjectiveTerms>& trace);
void write_report_csv(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::pair<Tensor, Tensor>>>& rows);

}  // namespace mccdic::cli
