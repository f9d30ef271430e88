#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "mccdic/dictionary.hpp"
#include "mccdic/solver.hpp"

namespace mccdic {

/// One co-registered training example. `target` is what the solver sees
/// (possibly degraded, at full resolution); `ground_truth` supervises the
/// reconstruction banks Qc and Qv.
struct TrainingPair {
  Tensor reference;
  Tensor target;
  Tensor ground_truth;
};

struct LearnConfig {
  int epochs = 10;
  /// Initial dictionary step. Unset: start at 1 and adapt. Zero disables
  /// all dictionary updates.
  std::optional<double> step;
  SolverConfig solver;
  /// Pairs per dictionary step; 0 means the whole corpus.
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  bool warm_start = false;
  /// Projected-gradient steps per batch on (Dc, Du, Hc, Hv) and on (Qc, Qv).
  int dict_steps = 1;
  int recon_steps = 1;
  /// Further steps on the finest-level filters of Qc and Qv. With the rest
  /// of the decoder fixed the loss is quadratic in them, so these steps run
  /// on a small Gram matrix instead of the images.
  int recon_base_steps = 500;
  /// After the last epoch, re-infer features and fit Qc, Qv once more.
  bool final_refit = true;
  std::vector<std::size_t> widths{8};
  std::size_t filter_size = 3;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double objective = 0.0;        // summed model objective after feature inference
  double objective_after = 0.0;  // same features, after the dictionary step
  double recon_loss = 0.0;       // 0.5 sum ||gt - Qc*C - Qv*V||^2 before the Q step
  double recon_loss_after = 0.0;
  double step_dict = 0.0;
  double step_recon = 0.0;
};

struct LearnResult {
  ModelDictionaries dicts;
  std::vector<EpochLog> log;
  double final_recon_loss = 0.0;  // after the final refit, if any
};

/// Gradient of 0.5 ||y - sum_k d_k * x_k||^2 with respect to every filter,
/// given the current residual y - sum_k d_k * x_k. Same shape as the bank.
DictionaryBank dict_gradient(const DictionaryBank& bank, const Tensor& features,
                             const Tensor& residual);
/// The same through the whole multi-scale decoder.
MultiScaleDictionary ms_dict_gradient(const MultiScaleDictionary& dict, const Pyramid& features,
                                      const Tensor& residual);

/// Rescales every filter with Frobenius norm above 1 to norm 1.
DictionaryBank project_unit_ball(const DictionaryBank& bank);
MultiScaleDictionary project_unit_ball(const MultiScaleDictionary& dict);

/// Alternates feature inference with projected gradient steps (backtracking
/// line search) on the dictionaries; the reconstruction banks are fit to the
/// features after the image-side step. Starts from `init` if given, otherwise
/// from seeded random dictionaries. The result is always tied.
LearnResult learn(const std::vector<TrainingPair>& corpus, const LearnConfig& cfg,
                  std::optional<ModelDictionaries> init = std::nullopt);

}  // namespace mccdic
