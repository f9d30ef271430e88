#include "mccdic/solver.hpp"

#include <cmath>
#include <stdexcept>

#include "mccdic/parallel.hpp"

namespace mccdic {

namespace {

const MultiScaleDictionary& adjoint_of(const MultiScalePair& pair, const SolverConfig& cfg) {
  return cfg.tied ? pair.synthesis() : pair.analysis();
}

void require_images(const Tensor& x1, const Tensor& x2) {
  if (x1.rank() != 2 || x2.rank() != 2) throw ShapeError("solver: inputs must be 2-D images");
  require_same_shape(x1, x2, "solver inputs");
}

Pyramid prox_step(const Pyramid& x, const Pyramid& grad, double eta, double lambda,
                  const SolverConfig& cfg) {
  return apply_prox(axpy(-eta, grad, x), eta * lambda, cfg);
}

double auto_step(double op_norm) {
  if (op_norm == 0.0) return 1.0;
  return 0.99 / (op_norm * op_norm);
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelDictionaries

ModelDictionaries ModelDictionaries::random(const std::vector<std::size_t>& widths,
                                            std::size_t filter_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto make = [&] { return MultiScalePair(MultiScaleDictionary::random(widths, filter_size, 1, rng)); };
  ModelDictionaries d;
  d.Dc = make();
  d.Du = make();
  d.Hc = make();
  d.Hv = make();
  d.Qc = make();
  d.Qv = make();
  return d;
}

bool ModelDictionaries::tied() const {
  return Dc.tied() && Du.tied() && Hc.tied() && Hv.tied() && Qc.tied() && Qv.tied() &&
         !Lc_analysis;
}

void ModelDictionaries::untie() {
  for (auto* p : {&Dc, &Du, &Hc, &Hv, &Qc, &Qv}) p->untie();
  if (!Lc_analysis) Lc_analysis.emplace(Dc.synthesis(), Hc.synthesis());
}

void ModelDictionaries::tie() {
  for (auto* p : {&Dc, &Du, &Hc, &Hv, &Qc, &Qv}) p->tie();
  Lc_analysis.reset();
}

void ModelDictionaries::validate() const {
  const auto w = widths();
  const auto n = filter_size();
  auto check = [&](const MultiScaleDictionary& d, const char* name) {
    if (d.widths() != w || d.filter_size() != n || d.channels() != 1) {
      throw ShapeError(std::string("model dictionaries: ") + name +
                       " does not match the shared widths/filter size");
    }
  };
  for (auto [p, name] : {std::pair{&Dc, "Dc"}, {&Du, "Du"}, {&Hc, "Hc"}, {&Hv, "Hv"},
                         {&Qc, "Qc"}, {&Qv, "Qv"}}) {
    check(p->synthesis(), name);
    check(p->analysis(), name);
  }
  if (Lc_analysis) {
    check(Lc_analysis->first, "Lc");
    check(Lc_analysis->second, "Lc");
  }
}

// ---------------------------------------------------------------------------
// SolverConfig

void SolverConfig::validate() const {
  if (stages < 0) throw std::invalid_argument("solver: stage count must be >= 0");
  for (const auto& eta : {eta_u, eta_v, eta_c}) {
    if (eta && !(*eta > 0.0)) throw std::invalid_argument("solver: step sizes must be > 0");
  }
  for (double l : {lambda_u, lambda_v, lambda_c}) {
    if (!(l >= 0.0)) throw std::invalid_argument("solver: lambda must be >= 0");
  }
  if (prox == ProxKind::plugin && !plugin) {
    throw std::invalid_argument("solver: plugin prox selected but none supplied");
  }
  if (scale_levels == 0) throw std::invalid_argument("solver: scale_levels must be >= 1");
}

ProxKind parse_prox(const std::string& name) {
  if (name == "soft" || name == "soft_threshold") return ProxKind::soft_threshold;
  if (name == "identity" || name == "none") return ProxKind::identity;
  if (name == "plugin") return ProxKind::plugin;
  throw std::invalid_argument("unknown prox '" + name + "'");
}

std::string to_string(ProxKind kind) {
  switch (kind) {
    case ProxKind::soft_threshold: return "soft";
    case ProxKind::identity: return "identity";
    case ProxKind::plugin: return "plugin";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Proximal maps

Tensor soft_threshold(const Tensor& x, double theta) {
  if (!(theta >= 0.0)) throw std::invalid_argument("soft_threshold: theta must be >= 0");
  Tensor out = x;
  for (auto& v : out.data()) {
    const double a = std::abs(v) - theta;
    v = a > 0.0 ? std::copysign(a, v) : 0.0;
  }
  return out;
}

Pyramid soft_threshold(const Pyramid& x, double theta) {
  Pyramid out;
  out.reserve(x.size());
  for (const auto& t : x) out.push_back(soft_threshold(t, theta));
  return out;
}

Pyramid apply_prox(const Pyramid& x, double theta, const SolverConfig& cfg) {
  switch (cfg.prox) {
    case ProxKind::soft_threshold: return soft_threshold(x, theta);
    case ProxKind::identity: return x;
    case ProxKind::plugin: {
      Pyramid out;
      for (const auto& t : x) out.push_back(cfg.plugin(t, theta));
      return out;
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// Operators

Tensor lc_synthesize(const ModelDictionaries& dicts, const Pyramid& C) {
  return stack_channels({ms_synthesize(dicts.Dc.synthesis(), C), ms_synthesize(dicts.Hc.synthesis(), C)});
}

Pyramid lc_analyze(const ModelDictionaries& dicts, const Tensor& M, bool tied) {
  if (M.rank() != 3 || M.dim(2) != 2) throw ShapeError("lc_analyze: expected a two-channel image");
  const bool separate = !tied && dicts.Lc_analysis.has_value();
  const auto& first = separate ? dicts.Lc_analysis->first : dicts.Dc.synthesis();
  const auto& second = separate ? dicts.Lc_analysis->second : dicts.Hc.synthesis();
  return axpy(1.0, ms_analyze(first, channel(M, 0)), ms_analyze(second, channel(M, 1)));
}

StepSizes resolve_steps(const ModelDictionaries& dicts, const SolverConfig& cfg, std::size_t rows,
                        std::size_t cols) {
  StepSizes s;
  s.u = cfg.eta_u.value_or(0.0);
  s.v = cfg.eta_v.value_or(0.0);
  s.c = cfg.eta_c.value_or(0.0);
  parallel_for(3, [&](std::size_t which) {
    if (which == 0 && !cfg.eta_u) s.u = auto_step(operator_norm(dicts.Du, rows, cols));
    if (which == 1 && !cfg.eta_v) s.v = auto_step(operator_norm(dicts.Hv, rows, cols));
    if (which == 2 && !cfg.eta_c) {
      const double lc = estimate_operator_norm(
          dicts.Dc.synthesis().pyramid_shapes(rows, cols),
          [&](const Pyramid& c) { return lc_synthesize(dicts, c); },
          [&](const Tensor& m) { return lc_analyze(dicts, m, true); });
      s.c = auto_step(lc);
    }
  });
  return s;
}

FeatureState init_features(const ModelDictionaries& dicts, const Tensor& x1, const Tensor& x2,
                           const SolverConfig& cfg) {
  require_images(x1, x2);
  FeatureState s;
  s.U = ms_analyze(adjoint_of(dicts.Du, cfg), x1);
  s.V = ms_analyze(adjoint_of(dicts.Hv, cfg), x2);
  s.C = lc_analyze(dicts, stack_channels({x1, x2}), cfg.tied);
  return s;
}

Pyramid grad_u(const FeatureState& s, const ModelDictionaries& dicts, const Tensor& x1,
               const SolverConfig& cfg) {
  const Tensor r = ms_synthesize(dicts.Dc.synthesis(), s.C) + ms_synthesize(dicts.Du.synthesis(), s.U) - x1;
  return ms_analyze(adjoint_of(dicts.Du, cfg), r);
}

Pyramid update_u(const FeatureState& s, const ModelDictionaries& dicts, const Tensor& x1,
                 const SolverConfig& cfg, double eta) {
  return prox_step(s.U, grad_u(s, dicts, x1, cfg), eta, cfg.lambda_u, cfg);
}

Pyramid grad_v(const FeatureState& s, const ModelDictionaries& dicts, const Tensor& x2,
               const SolverConfig& cfg) {
  const Tensor r = ms_synthesize(dicts.Hc.synthesis(), s.C) + ms_synthesize(dicts.Hv.synthesis(), s.V) - x2;
  return ms_analyze(adjoint_of(dicts.Hv, cfg), r);
}

Pyramid update_v(const FeatureState& s, const ModelDictionaries& dicts, const Tensor& x2,
                 const SolverConfig& cfg, double eta) {
  return prox_step(s.V, grad_v(s, dicts, x2, cfg), eta, cfg.lambda_v, cfg);
}

Tensor build_stacked_residual(const FeatureState& s, const ModelDictionaries& dicts,
                              const Tensor& x1, const Tensor& x2) {
  return stack_channels({x1 - ms_synthesize(dicts.Du.synthesis(), s.U),
                         x2 - ms_synthesize(dicts.Hv.synthesis(), s.V)});
}

Pyramid grad_c(const FeatureState& s, const ModelDictionaries& dicts, const Tensor& M,
               const SolverConfig& cfg) {
  return lc_analyze(dicts, lc_synthesize(dicts, s.C) - M, cfg.tied);
}

Pyramid update_c(const FeatureState& s, const ModelDictionaries& dicts, const Tensor& M,
                 const SolverConfig& cfg, double eta) {
  return prox_step(s.C, grad_c(s, dicts, M, cfg), eta, cfg.lambda_c, cfg);
}

FeatureState iterate_block(FeatureState s, const ModelDictionaries& dicts, const Tensor& x1,
                           const Tensor& x2, const SolverConfig& cfg, const StepSizes& steps) {
  s.U = update_u(s, dicts, x1, cfg, steps.u);
  s.V = update_v(s, dicts, x2, cfg, steps.v);
  const Tensor M = build_stacked_residual(s, dicts, x1, x2);
  s.C = update_c(s, dicts, M, cfg, steps.c);
  ++s.t;
  return s;
}

SolveResult iterate(const ModelDictionaries& dicts, const Tensor& x1, const Tensor& x2,
                    const SolverConfig& cfg, const FeatureState* warm) {
  cfg.validate();
  dicts.validate();
  require_images(x1, x2);
  require_finite(x1, "solver reference");
  require_finite(x2, "solver target");
  if (cfg.scale_levels != dicts.levels()) {
    throw std::invalid_argument("solver: scale_levels " + std::to_string(cfg.scale_levels) +
                                " does not match dictionary levels " +
                                std::to_string(dicts.levels()));
  }
  SolveResult result;
  if (cfg.stages > 0) result.steps = resolve_steps(dicts, cfg, x1.rows(), x1.cols());
  if (warm) {
    result.state = *warm;
    result.state.t = 0;
  } else {
    result.state = init_features(dicts, x1, x2, cfg);
  }
  result.trace.push_back(objective_terms(result.state, dicts, x1, x2, cfg));
  for (int t = 0; t < cfg.stages; ++t) {
    result.state = iterate_block(std::move(result.state), dicts, x1, x2, cfg, result.steps);
    if (!all_finite(result.state.C) || !all_finite(result.state.U) || !all_finite(result.state.V)) {
      throw std::domain_error("solver: non-finite features after block " + std::to_string(t + 1));
    }
    result.trace.push_back(objective_terms(result.state, dicts, x1, x2, cfg));
  }
  return result;
}

Tensor reconstruct(const FeatureState& s, const ModelDictionaries& dicts) {
  return ms_synthesize(dicts.Qc.synthesis(), s.C) + ms_synthesize(dicts.Qv.synthesis(), s.V);
}

Components decompose(const FeatureState& s, const ModelDictionaries& dicts) {
  return {ms_synthesize(dicts.Dc.synthesis(), s.C), ms_synthesize(dicts.Du.synthesis(), s.U),
          ms_synthesize(dicts.Hc.synthesis(), s.C), ms_synthesize(dicts.Hv.synthesis(), s.V)};
}

ObjectiveTerms objective_terms(const FeatureState& s, const ModelDictionaries& dicts,
                               const Tensor& x1, const Tensor& x2, const SolverConfig& cfg) {
  const auto parts = decompose(s, dicts);
  ObjectiveTerms o;
  o.fid1 = 0.5 * squared_norm(x1 - parts.common_ref - parts.unique_ref);
  o.fid2 = 0.5 * squared_norm(x2 - parts.common_target - parts.unique_target);
  o.l1_c = l1_norm(s.C);
  o.l1_u = l1_norm(s.U);
  o.l1_v = l1_norm(s.V);
  o.total = o.fid1 + o.fid2 + cfg.lambda_c * o.l1_c + cfg.lambda_u * o.l1_u + cfg.lambda_v * o.l1_v;
  return o;
}

double objective_value(const FeatureState& s, const ModelDictionaries& dicts, const Tensor& x1,
                       const Tensor& x2, const SolverConfig& cfg) {
  return objective_terms(s, dicts, x1, x2, cfg).total;
}

}  // namespace mccdic
