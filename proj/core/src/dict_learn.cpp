#include "mccdic/dict_learn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "mccdic/parallel.hpp"

namespace mccdic {

namespace {

using Params = std::vector<MultiScaleDictionary>;

double dot(const Params& a, const Params& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += mccdic::dot(a[i], b[i]);
  return s;
}

Params project(Params p) {
  for (auto& d : p) d = project_unit_ball(d);
  return p;
}

struct StepOutcome {
  Params params;
  double before = 0.0;
  double after = 0.0;
  double step = 0.0;
};

// Projected gradient step with backtracking on the quadratic upper bound:
// accept when J(P') <= J(P) + <g, P' - P> + ||P' - P||^2 / (2 step).
StepOutcome projected_step(const Params& params, double initial_step,
                           const std::function<double(const Params&)>& objective,
                           const std::function<Params(const Params&)>& gradient) {
  constexpr int kMaxHalvings = 60;
  StepOutcome out{params, objective(params), 0.0, initial_step};
  out.after = out.before;
  if (initial_step <= 0.0) return out;
  const Params g = gradient(params);
  double step = initial_step;
  for (int h = 0; h < kMaxHalvings; ++h, step *= 0.5) {
    Params trial;
    trial.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) trial.push_back(axpy(-step, g[i], params[i]));
    trial = project(std::move(trial));
    Params delta;
    for (std::size_t i = 0; i < params.size(); ++i) delta.push_back(axpy(-1.0, params[i], trial[i]));
    const double value = objective(trial);
    const double bound = out.before + dot(g, delta) + dot(delta, delta) / (2.0 * step);
    if (std::isfinite(value) && value <= bound && value <= out.before) {
      out.params = std::move(trial);
      out.after = value;
      out.step = step;
      return out;
    }
  }
  out.step = 0.0;
  return out;
}

void validate_corpus(const std::vector<TrainingPair>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("learn: empty corpus");
  const Shape& shape = corpus.front().reference.shape();
  if (shape.size() != 2) throw ShapeError("learn: images must be 2-D");
  for (const auto& p : corpus) {
    if (p.reference.shape() != shape || p.target.shape() != shape ||
        p.ground_truth.shape() != shape) {
      throw ShapeError("learn: all corpus images must be " + to_string(shape));
    }
    require_finite(p.reference, "learn corpus reference");
    require_finite(p.target, "learn corpus target");
    require_finite(p.ground_truth, "learn corpus ground truth");
  }
}

}  // namespace

void LearnConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("learn: epochs must be >= 1");
  if (step && !(*step >= 0.0)) throw std::invalid_argument("learn: step must be >= 0");
  if (dict_steps < 0 || recon_steps < 0 || recon_base_steps < 0) throw std::invalid_argument("learn: negative step count");
  if (widths.empty() || filter_size == 0) throw std::invalid_argument("learn: bad dictionary shape");
  solver.validate();
}

DictionaryBank dict_gradient(const DictionaryBank& bank, const Tensor& features,
                             const Tensor& residual) {
  const std::size_t K = bank.count(), n = bank.size(), p = bank.channels();
  const std::size_t m = residual.rows(), w = residual.cols();
  const std::size_t fk = features.rank() == 3 ? features.dim(2) : 1;
  const std::size_t rp = residual.rank() == 3 ? residual.dim(2) : 1;
  if (fk != K || rp != p || features.rows() != m || features.cols() != w) {
    throw ShapeError("dict_gradient: features " + to_string(features.shape()) + " / residual " +
                     to_string(residual.shape()) + " inconsistent with bank");
  }
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>((n - 1) / 2);
  const std::ptrdiff_t M = static_cast<std::ptrdiff_t>(m), N = static_cast<std::ptrdiff_t>(w);
  // Accumulated tap-major ({n, n, p, K}) so the inner loop runs over K.
  std::vector<double> gt(K * n * n * p, 0.0);
  const double* x = features.data().data();
  const double* y = residual.data().data();
  for (std::ptrdiff_t i = 0; i < M; ++i) {
    for (std::ptrdiff_t j = 0; j < N; ++j) {
      const double* yp = y + (i * N + j) * static_cast<std::ptrdiff_t>(p);
      for (std::size_t a = 0; a < n; ++a) {
        const std::ptrdiff_t ii = i + r - static_cast<std::ptrdiff_t>(a);
        if (ii < 0 || ii >= M) continue;
        for (std::size_t b = 0; b < n; ++b) {
          const std::ptrdiff_t jj = j + r - static_cast<std::ptrdiff_t>(b);
          if (jj < 0 || jj >= N) continue;
          const double* xp = x + (ii * N + jj) * static_cast<std::ptrdiff_t>(K);
          double* gp = gt.data() + (a * n + b) * p * K;
          for (std::size_t c = 0; c < p; ++c, gp += K) {
            const double yv = yp[c];
            for (std::size_t k = 0; k < K; ++k) gp[k] -= yv * xp[k];
          }
        }
      }
    }
  }
  auto grad = DictionaryBank::zeros(K, n, p);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t c = 0; c < p; ++c) grad.at(k, a, b, c) = gt[((a * n + b) * p + c) * K + k];
      }
    }
  }
  return grad;
}

std::vector<Tensor> decoder_activations(const MultiScaleDictionary& dict, const Pyramid& features) {
  if (features.size() != dict.levels()) throw ShapeError("decoder_activations: level mismatch");
  std::vector<Tensor> sums(dict.levels());
  sums.back() = features.back();
  for (std::size_t l = dict.levels() - 1; l-- > 0;) {
    sums[l] = synthesize_channels(dict.up()[l], zero_insert(sums[l + 1])) + features[l];
  }
  return sums;
}

MultiScaleDictionary ms_dict_gradient(const MultiScaleDictionary& dict, const Pyramid& features,
                                      const Tensor& residual) {
  const std::vector<Tensor> sums = decoder_activations(dict, features);
  auto base_grad = dict_gradient(dict.base(), sums[0], residual);
  std::vector<DictionaryBank> up_grads;
  Tensor back = analyze(dict.base(), residual);  // negative gradient wrt sums[0]
  for (std::size_t l = 0; l + 1 < dict.levels(); ++l) {
    up_grads.push_back(dict_gradient(dict.up()[l], zero_insert(sums[l + 1]), back));
    back = decimate(analyze(dict.up()[l], back));
  }
  return MultiScaleDictionary(std::move(base_grad), std::move(up_grads));
}

DictionaryBank project_unit_ball(const DictionaryBank& bank) {
  DictionaryBank out = bank;
  const std::size_t per = bank.size() * bank.size() * bank.channels();
  for (std::size_t k = 0; k < bank.count(); ++k) {
    const double nrm = bank.filter_norm(k);
    if (nrm <= 1.0) continue;
    for (std::size_t i = 0; i < per; ++i) out.filters()[k * per + i] /= nrm;
  }
  return out;
}

MultiScaleDictionary project_unit_ball(const MultiScaleDictionary& dict) {
  std::vector<DictionaryBank> up;
  for (const auto& b : dict.up()) up.push_back(project_unit_ball(b));
  return MultiScaleDictionary(project_unit_ball(dict.base()), std::move(up));
}

namespace {

// 0.5 theta' G theta - h' theta + offset: the reconstruction loss as a
// function of the finest-level filters of Qc and Qv, everything else fixed.
struct BaseQuadratic {
  std::size_t dim = 0;
  std::vector<double> gram;
  std::vector<double> rhs;
  double offset = 0.0;

  double value(const std::vector<double>& theta) const {
    double quad = 0.0, lin = 0.0;
    for (std::size_t q = 0; q < dim; ++q) {
      const double* row = gram.data() + q * dim;
      double s = 0.0;
      for (std::size_t t = 0; t < dim; ++t) s += row[t] * theta[t];
      quad += theta[q] * s;
      lin += rhs[q] * theta[q];
    }
    return 0.5 * quad - lin + offset;
  }

  std::vector<double> gradient(const std::vector<double>& theta) const {
    std::vector<double> g(dim);
    for (std::size_t q = 0; q < dim; ++q) {
      const double* row = gram.data() + q * dim;
      double s = -rhs[q];
      for (std::size_t t = 0; t < dim; ++t) s += row[t] * theta[t];
      g[q] = s;
    }
    return g;
  }
};

// Adds one image: every filter tap contributes the correspondingly shifted
// activation channel as a regressor for `target`.
void accumulate(BaseQuadratic& quad, const std::vector<const Tensor*>& acts, std::size_t n,
                const Tensor& target) {
  const std::ptrdiff_t M = static_cast<std::ptrdiff_t>(target.rows());
  const std::ptrdiff_t N = static_cast<std::ptrdiff_t>(target.cols());
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>((n - 1) / 2);
  const std::size_t dim = quad.dim;
  std::vector<double> s(dim);
  std::vector<double> upper(dim * dim, 0.0);
  for (std::ptrdiff_t i = 0; i < M; ++i) {
    for (std::ptrdiff_t j = 0; j < N; ++j) {
      std::size_t q = 0;
      for (const Tensor* act : acts) {
        const std::size_t K = act->dim(2);
        for (std::size_t k = 0; k < K; ++k) {
          for (std::size_t a = 0; a < n; ++a) {
            const std::ptrdiff_t ii = i + r - static_cast<std::ptrdiff_t>(a);
            for (std::size_t b = 0; b < n; ++b, ++q) {
              const std::ptrdiff_t jj = j + r - static_cast<std::ptrdiff_t>(b);
              const bool inside = ii >= 0 && ii < M && jj >= 0 && jj < N;
              s[q] = inside ? act->at(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), k) : 0.0;
            }
          }
        }
      }
      const double y = target.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      quad.offset += 0.5 * y * y;
      for (std::size_t u = 0; u < dim; ++u) {
        const double su = s[u];
        if (su == 0.0) continue;
        quad.rhs[u] += su * y;
        double* row = upper.data() + u * dim;
        for (std::size_t t = u; t < dim; ++t) row[t] += su * s[t];
      }
    }
  }
  for (std::size_t u = 0; u < dim; ++u) {
    for (std::size_t t = u; t < dim; ++t) {
      quad.gram[u * dim + t] += upper[u * dim + t];
      if (t != u) quad.gram[t * dim + u] += upper[u * dim + t];
    }
  }
}

void project_groups(std::vector<double>& theta, std::size_t group) {
  for (std::size_t g0 = 0; g0 < theta.size(); g0 += group) {
    double s = 0.0;
    for (std::size_t i = g0; i < g0 + group; ++i) s += theta[i] * theta[i];
    const double nrm = std::sqrt(s);
    if (nrm <= 1.0) continue;
    for (std::size_t i = g0; i < g0 + group; ++i) theta[i] /= nrm;
  }
}

// The same backtracking rule as projected_step, on the quadratic.
double quadratic_steps(const BaseQuadratic& quad, std::vector<double>& theta, std::size_t group,
                       int steps, double& step, bool adapt) {
  constexpr int kMaxHalvings = 60;
  double current = quad.value(theta);
  for (int it = 0; it < steps && step > 0.0; ++it) {
    const std::vector<double> g = quad.gradient(theta);
    double trial_step = step;
    bool accepted = false;
    for (int h = 0; h < kMaxHalvings; ++h, trial_step *= 0.5) {
      std::vector<double> trial(theta.size());
      for (std::size_t i = 0; i < theta.size(); ++i) trial[i] = theta[i] - trial_step * g[i];
      project_groups(trial, group);
      double lin = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double d = trial[i] - theta[i];
        lin += g[i] * d;
        sq += d * d;
      }
      const double value = quad.value(trial);
      if (std::isfinite(value) && value <= current + lin + sq / (2.0 * trial_step) && value <= current) {
        theta = std::move(trial);
        current = value;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    if (adapt) step = 2.0 * trial_step;
  }
  return current;
}

}  // namespace

LearnResult learn(const std::vector<TrainingPair>& corpus, const LearnConfig& cfg,
                  std::optional<ModelDictionaries> init) {
  cfg.validate();
  validate_corpus(corpus);
  LearnResult result;
  result.dicts = init ? std::move(*init) : ModelDictionaries::random(cfg.widths, cfg.filter_size, cfg.seed);
  result.dicts.tie();
  result.dicts.validate();
  ModelDictionaries& d = result.dicts;
  const std::size_t rows = corpus.front().reference.rows(), cols = corpus.front().reference.cols();

  const std::size_t batch = cfg.batch_size == 0 ? corpus.size() : cfg.batch_size;
  std::vector<FeatureState> states(corpus.size());
  std::vector<bool> have_state(corpus.size(), false);
  double step_dict = cfg.step ? *cfg.step : 1.0;
  double step_recon = cfg.step ? *cfg.step : 1.0;
  double step_quad = cfg.step ? *cfg.step : 1.0;

  // Feature inference, independent per pair; returns the summed objective.
  auto infer = [&](std::size_t first, std::size_t last, bool warm_start) {
    SolverConfig solver = cfg.solver;
    const StepSizes steps = resolve_steps(d, solver, rows, cols);
    solver.eta_u = steps.u;
    solver.eta_v = steps.v;
    solver.eta_c = steps.c;
    std::vector<double> objectives(last - first);
    parallel_for(last - first, [&](std::size_t i) {
      const auto& pair = corpus[first + i];
      const FeatureState* warm = warm_start && have_state[first + i] ? &states[first + i] : nullptr;
      auto solved = iterate(d, pair.reference, pair.target, solver, warm);
      objectives[i] = solved.trace.back().total;
      states[first + i] = std::move(solved.state);
    });
    for (std::size_t i = first; i < last; ++i) have_state[i] = true;
    double total = 0.0;
    for (double v : objectives) total += v;
    return total;
  };

  auto recon = [&](const Params& p, std::size_t first, std::size_t last) {
    double j = 0.0;
    for (std::size_t i = first; i < last; ++i) {
      const auto& s = states[i];
      j += 0.5 * squared_norm(corpus[i].ground_truth - ms_synthesize(p[0], s.C) - ms_synthesize(p[1], s.V));
    }
    return j;
  };

  // Reconstruction banks against the ground truth: image-space steps on
  // every Q bank, then steps on the finest-level filters through their
  // quadratic form. Returns the loss after the update.
  auto fit_recon = [&](std::size_t first, std::size_t last, EpochLog* log) {
    auto loss = [&](const Params& p) { return recon(p, first, last); };
    auto loss_grad = [&](const Params& p) {
      Params g{scaled(p[0], 0.0), scaled(p[1], 0.0)};
      for (std::size_t i = first; i < last; ++i) {
        const auto& s = states[i];
        const Tensor r = corpus[i].ground_truth - ms_synthesize(p[0], s.C) - ms_synthesize(p[1], s.V);
        g[0] = axpy(1.0, ms_dict_gradient(p[0], s.C, r), g[0]);
        g[1] = axpy(1.0, ms_dict_gradient(p[1], s.V, r), g[1]);
      }
      return g;
    };
    Params q{d.Qc.synthesis(), d.Qv.synthesis()};
    double after = loss(q);
    for (int k = 0; k < cfg.recon_steps; ++k) {
      auto out = projected_step(q, step_recon, loss, loss_grad);
      q = std::move(out.params);
      after = out.after;
      if (out.step > 0.0) step_recon = cfg.step ? *cfg.step : 2.0 * out.step;
      if (log) log->step_recon = out.step;
    }
    if (cfg.recon_base_steps > 0 && step_quad > 0.0) {
      const std::size_t n = q[0].filter_size();
      const std::size_t kc = q[0].widths()[0], kv = q[1].widths()[0];
      BaseQuadratic quad;
      quad.dim = (kc + kv) * n * n;
      quad.gram.assign(quad.dim * quad.dim, 0.0);
      quad.rhs.assign(quad.dim, 0.0);
      // Upper levels feed the base filters through the decoder sums, which
      // do not depend on the base filters themselves.
      for (std::size_t i = first; i < last; ++i) {
        const auto ac = decoder_activations(q[0], states[i].C);
        const auto av = decoder_activations(q[1], states[i].V);
        accumulate(quad, {&ac[0], &av[0]}, n, corpus[i].ground_truth);
      }
      std::vector<double> theta(q[0].base().filters().data().begin(), q[0].base().filters().data().end());
      theta.insert(theta.end(), q[1].base().filters().data().begin(), q[1].base().filters().data().end());
      quadratic_steps(quad, theta, n * n, cfg.recon_base_steps, step_quad, !cfg.step);
      const auto split = theta.begin() + static_cast<std::ptrdiff_t>(kc * n * n);
      std::copy(theta.begin(), split, q[0].base().filters().data().begin());
      std::copy(split, theta.end(), q[1].base().filters().data().begin());
      after = loss(q);
    }
    d.Qc.synthesis() = std::move(q[0]);
    d.Qv.synthesis() = std::move(q[1]);
    return after;
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t first = 0; first < corpus.size(); first += batch) {
      const std::size_t last = std::min(corpus.size(), first + batch);

      // (a) feature inference
      log.objective += infer(first, last, cfg.warm_start);
      double l1_terms = 0.0;
      for (std::size_t i = first; i < last; ++i) {
        const auto& s = states[i];
        l1_terms += cfg.solver.lambda_c * l1_norm(s.C) + cfg.solver.lambda_u * l1_norm(s.U) +
                    cfg.solver.lambda_v * l1_norm(s.V);
      }

      // (b) image-side dictionaries from the two fidelity terms; Lc follows
      // from Dc and Hc.
      auto fidelity = [&](const Params& p) {
        double j = 0.0;
        for (std::size_t i = first; i < last; ++i) {
          const auto& s = states[i];
          j += 0.5 * squared_norm(corpus[i].reference - ms_synthesize(p[0], s.C) - ms_synthesize(p[1], s.U));
          j += 0.5 * squared_norm(corpus[i].target - ms_synthesize(p[2], s.C) - ms_synthesize(p[3], s.V));
        }
        return j;
      };
      auto fidelity_grad = [&](const Params& p) {
        Params g;
        for (const auto& q : p) g.push_back(scaled(q, 0.0));
        for (std::size_t i = first; i < last; ++i) {
          const auto& s = states[i];
          const Tensor r1 = corpus[i].reference - ms_synthesize(p[0], s.C) - ms_synthesize(p[1], s.U);
          const Tensor r2 = corpus[i].target - ms_synthesize(p[2], s.C) - ms_synthesize(p[3], s.V);
          g[0] = axpy(1.0, ms_dict_gradient(p[0], s.C, r1), g[0]);
          g[1] = axpy(1.0, ms_dict_gradient(p[1], s.U, r1), g[1]);
          g[2] = axpy(1.0, ms_dict_gradient(p[2], s.C, r2), g[2]);
          g[3] = axpy(1.0, ms_dict_gradient(p[3], s.V, r2), g[3]);
        }
        return g;
      };
      Params image_side{d.Dc.synthesis(), d.Du.synthesis(), d.Hc.synthesis(), d.Hv.synthesis()};
      double fid_after = fidelity(image_side);
      for (int k = 0; k < cfg.dict_steps; ++k) {
        auto out = projected_step(image_side, step_dict, fidelity, fidelity_grad);
        image_side = std::move(out.params);
        fid_after = out.after;
        if (out.step > 0.0) step_dict = cfg.step ? *cfg.step : 2.0 * out.step;
        log.step_dict = out.step;
      }
      log.objective_after += fid_after + l1_terms;
      d.Dc.synthesis() = std::move(image_side[0]);
      d.Du.synthesis() = std::move(image_side[1]);
      d.Hc.synthesis() = std::move(image_side[2]);
      d.Hv.synthesis() = std::move(image_side[3]);

      // (c) reconstruction banks against the ground truth
      log.recon_loss += recon({d.Qc.synthesis(), d.Qv.synthesis()}, first, last);
      log.recon_loss_after += fit_recon(first, last, &log);
    }
    result.log.push_back(log);
  }

  // The last image-side update changed the features; refit Q to the
  // features the final dictionaries actually produce.
  if (cfg.final_refit) {
    infer(0, corpus.size(), false);
    result.final_recon_loss = fit_recon(0, corpus.size(), nullptr);
  }
  return result;
}

}  // namespace mccdic
