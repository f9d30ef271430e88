#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mccdic/dictionary.hpp"
#include "mccdic/tensor.hpp"

namespace mccdic {

/// Every synthesis/analysis operator of the two-contrast model.
///
///   reference x1 ~ Dc * C + Du * U
///   target    x2 ~ Hc * C + Hv * V
///   restored  x2' = Qc * C + Qv * V
///
/// The stacked common operator Lc maps C to both images at once; its
/// synthesis is always the channel stack of Dc and Hc. In untied mode its
/// analysis is a separate pair (one part per image channel), initialized from
/// Dc and Hc and free to diverge.
struct ModelDictionaries {
  MultiScalePair Dc, Du, Hc, Hv, Qc, Qv;
  std::optional<std::pair<MultiScaleDictionary, MultiScaleDictionary>> Lc_analysis;

  /// Gaussian unit-norm filters from a fixed seed.
  static ModelDictionaries random(const std::vector<std::size_t>& widths, std::size_t filter_size,
                                  std::uint64_t seed);

  std::size_t levels() const { return Dc.synthesis().levels(); }
  std::vector<std::size_t> widths() const { return Dc.synthesis().widths(); }
  std::size_t filter_size() const { return Dc.synthesis().filter_size(); }
  bool tied() const;
  void untie();
  void tie();

  /// Throws ShapeError unless every operator shares levels and widths.
  void validate() const;
};

enum class ProxKind { soft_threshold, identity, plugin };

/// Proximal map contract: (input, threshold) -> output; must be
/// non-expansive for the descent guarantees to hold.
using ProxOperator = std::function<Tensor(const Tensor&, double)>;

struct SolverConfig {
  int stages = 4;
  std::optional<double> eta_u, eta_v, eta_c;  // unset: 0.99 / ||op||^2
  double lambda_u = 1e-3;
  double lambda_v = 1e-3;
  double lambda_c = 1e-3;
  ProxKind prox = ProxKind::soft_threshold;
  ProxOperator plugin;
  /// When false the stored analysis dictionaries are used; otherwise the
  /// exact adjoints of the synthesis dictionaries.
  bool tied = true;
  std::size_t scale_levels = 1;

  void validate() const;
};

ProxKind parse_prox(const std::string& name);
std::string to_string(ProxKind kind);

struct FeatureState {
  Pyramid C, U, V;
  int t = 0;
};

struct StepSizes {
  double u = 0.0, v = 0.0, c = 0.0;
};

struct ObjectiveTerms {
  double fid1 = 0.0;  // 0.5 ||x1 - Dc*C - Du*U||^2
  double fid2 = 0.0;  // 0.5 ||x2 - Hc*C - Hv*V||^2
  double l1_c = 0.0, l1_u = 0.0, l1_v = 0.0;
  double total = 0.0;
};

struct SolveResult {
  FeatureState state;
  std::vector<ObjectiveTerms> trace;  // entry t is the objective after t blocks
  StepSizes steps;  // left at zero when cfg.stages == 0
};

/// Images produced by each half of both models, for inspecting the split.
struct Components {
  Tensor common_ref;     // Dc * C
  Tensor unique_ref;     // Du * U
  Tensor common_target;  // Hc * C
  Tensor unique_target;  // Hv * V
};

Tensor soft_threshold(const Tensor& x, double theta);
Pyramid soft_threshold(const Pyramid& x, double theta);
Pyramid apply_prox(const Pyramid& x, double theta, const SolverConfig& cfg);

/// Stacked common operator: C -> (Dc*C, Hc*C) as a two-channel image.
Tensor lc_synthesize(const ModelDictionaries& dicts, const Pyramid& C);
/// Adjoint of lc_synthesize (or the untied analysis when `tied` is false).
Pyramid lc_analyze(const ModelDictionaries& dicts, const Tensor& M, bool tied = true);

StepSizes resolve_steps(const ModelDictionaries& dicts, const SolverConfig& cfg, std::size_t rows,
                        std::size_t cols);

FeatureState init_features(const ModelDictionaries& dicts, const Tensor& x1, const Tensor& x2,
                           const SolverConfig& cfg = {});

Pyramid grad_u(const FeatureState& s, const ModelDictionaries& dicts, const Tensor& x1,
               const SolverConfig& cfg = {});
Pyramid update_u(const FeatureState& s, const ModelDictionaries& dicts, const Tensor& x1,
                 const SolverConfig& cfg, double eta);

Pyramid grad_v(const FeatureState& s, const ModelDictionaries& dicts, const Tensor& x2,
               const SolverConfig& cfg = {});
Pyramid update_v(const FeatureState& s, const ModelDictionaries& dicts, const Tensor& x2,
                 const SolverConfig& cfg, double eta);

/// (x1 - Du*U, x2 - Hv*V) stacked as a two-channel image.
Tensor build_stacked_residual(const FeatureState& s, const ModelDictionaries& dicts,
                              const Tensor& x1, const Tensor& x2);
Pyramid grad_c(const FeatureState& s, const ModelDictionaries& dicts, const Tensor& M,
               const SolverConfig& cfg = {});
Pyramid update_c(const FeatureState& s, const ModelDictionaries& dicts, const Tensor& M,
                 const SolverConfig& cfg, double eta);

/// One U -> V -> C block.
FeatureState iterate_block(FeatureState s, const ModelDictionaries& dicts, const Tensor& x1,
                           const Tensor& x2, const SolverConfig& cfg, const StepSizes& steps);

/// Initialization followed by cfg.stages blocks. A warm state, when given,
/// replaces the analysis-based initialization.
SolveResult iterate(const ModelDictionaries& dicts, const Tensor& x1, const Tensor& x2,
                    const SolverConfig& cfg, const FeatureState* warm = nullptr);

Tensor reconstruct(const FeatureState& s, const ModelDictionaries& dicts);
Components decompose(const FeatureState& s, const ModelDictionaries& dicts);

ObjectiveTerms objective_terms(const FeatureState& s, const ModelDictionaries& dicts,
                               const Tensor& x1, const Tensor& x2, const SolverConfig& cfg);
double objective_value(const FeatureState& s, const ModelDictionaries& dicts, const Tensor& x1,
                       const Tensor& x2, const SolverConfig& cfg);

/// Directory layout: bank_<name>.mct per filter bank plus a `dict.toml`
/// key = value manifest.
void save_dictionaries(const std::string& dir, const ModelDictionaries& dicts);
ModelDictionaries load_dictionaries(const std::string& dir);

}  // namespace mccdic
