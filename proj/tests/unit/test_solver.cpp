#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "mccdic/solver.hpp"
#include "oracles.hpp"

using namespace mccdic;

namespace {

struct Instance {
  ModelDictionaries dicts;
  Tensor x1, x2;
  FeatureState state;
};

Instance random_instance(std::size_t size, const std::vector<std::size_t>& widths, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Instance in{ModelDictionaries::random(widths, 3, seed), oracle::random_tensor({size, size}, rng),
              oracle::random_tensor({size, size}, rng), {}};
  const auto shapes = in.dicts.Dc.synthesis().pyramid_shapes(size, size);
  in.state.C = oracle::random_pyramid(shapes, rng);
  in.state.U = oracle::random_pyramid(shapes, rng);
  in.state.V = oracle::random_pyramid(shapes, rng);
  return in;
}

double f_u(const Instance& in, const Pyramid& U) {
  return 0.5 * squared_norm(in.x1 - ms_synthesize(in.dicts.Dc.synthesis(), in.state.C) -
                            ms_synthesize(in.dicts.Du.synthesis(), U));
}
double f_v(const Instance& in, const Pyramid& V) {
  return 0.5 * squared_norm(in.x2 - ms_synthesize(in.dicts.Hc.synthesis(), in.state.C) -
                            ms_synthesize(in.dicts.Hv.synthesis(), V));
}
double f_c(const Instance& in, const Tensor& M, const Pyramid& C) {
  return 0.5 * squared_norm(M - lc_synthesize(in.dicts, C));
}

double fd_relative_error(const std::function<double(const Pyramid&)>& f, const Pyramid& x,
                         const Pyramid& grad, std::mt19937_64& rng) {
  Pyramid d;
  for (const auto& t : x) d.push_back(oracle::random_tensor(t.shape(), rng));
  const double h = 1e-5;
  const double fd = (f(axpy(h, d, x)) - f(axpy(-h, d, x))) / (2.0 * h);
  const double an = dot(grad, d);
  return std::abs(fd - an) / std::max(std::abs(an), 1e-12);
}

SolverConfig fixed_steps(double eta) {
  SolverConfig cfg;
  cfg.eta_u = cfg.eta_v = cfg.eta_c = eta;
  return cfg;
}

}  // namespace

TEST_SUITE("solver") {
  TEST_CASE("soft threshold examples") {
    const Tensor x({3}, {0.7, -0.1, -1.5});
    CHECK(soft_threshold(x, 0.0) == x);
    const Tensor y = soft_threshold(x, 0.2);
    CHECK(y[0] == doctest::Approx(0.5));
    CHECK(y[1] == 0.0);
    CHECK(y[2] == doctest::Approx(-1.3));
    CHECK_THROWS_AS(soft_threshold(x, -0.1), std::invalid_argument);
  }

  TEST_CASE("soft threshold matches a grid-search prox") {
    for (double theta : {0.0, 0.1, 0.5, 1.0}) {
      for (double x = -2.0; x <= 2.0 + 1e-9; x += 0.25) {
        const double got = soft_threshold(Tensor({1}, {x}), theta)[0];
        CHECK(std::abs(got - oracle::prox_grid_search(x, theta)) <= 1e-3);
      }
    }
  }

  TEST_CASE("initialization examples") {
    auto d = ModelDictionaries::random({4}, 3, 1);
    const auto zero = init_features(d, Tensor({6, 6}), Tensor({6, 6}));
    CHECK(squared_norm(zero.C) + squared_norm(zero.U) + squared_norm(zero.V) == 0.0);
    CHECK(zero.t == 0);

    ModelDictionaries delta;
    for (auto* p : {&delta.Dc, &delta.Du, &delta.Hc, &delta.Hv, &delta.Qc, &delta.Qv}) {
      *p = MultiScalePair(MultiScaleDictionary(DictionaryBank::delta(1, 3)));
    }
    std::mt19937_64 rng(40);
    const Tensor x1 = oracle::random_tensor({5, 5}, rng), x2 = oracle::random_tensor({5, 5}, rng);
    const auto s = init_features(delta, x1, x2);
    CHECK(s.U[0].reshaped({5, 5}) == x1);
    CHECK(s.V[0].reshaped({5, 5}) == x2);
    CHECK_THROWS_AS(init_features(d, Tensor({6, 6}), Tensor({6, 5})), ShapeError);
  }

  TEST_CASE("initialization matches the dense analysis oracle") {
    auto d = ModelDictionaries::random({3}, 3, 2);
    std::mt19937_64 rng(41);
    const Tensor x1 = oracle::random_tensor({8, 8}, rng), x2 = oracle::random_tensor({8, 8}, rng);
    const auto s = init_features(d, x1, x2);
    auto A = [&](const MultiScalePair& p) { return oracle::synthesis_matrix(p.synthesis().base(), 8, 8); };
    const Eigen::VectorXd c0 = A(d.Dc).transpose() * oracle::vec(x1) + A(d.Hc).transpose() * oracle::vec(x2);
    CHECK((oracle::vec(s.C) - c0).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((oracle::vec(s.U) - A(d.Du).transpose() * oracle::vec(x1)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((oracle::vec(s.V) - A(d.Hv).transpose() * oracle::vec(x2)).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("gradients vanish on an exact fit and reduce to the data term at zero") {
    auto in = random_instance(6, {4}, 3);
    in.x1 = ms_synthesize(in.dicts.Dc.synthesis(), in.state.C) + ms_synthesize(in.dicts.Du.synthesis(), in.state.U);
    in.x2 = ms_synthesize(in.dicts.Hc.synthesis(), in.state.C) + ms_synthesize(in.dicts.Hv.synthesis(), in.state.V);
    CHECK(squared_norm(grad_u(in.state, in.dicts, in.x1)) < 1e-24);
    CHECK(squared_norm(grad_v(in.state, in.dicts, in.x2)) < 1e-24);
    const Tensor M = build_stacked_residual(in.state, in.dicts, in.x1, in.x2);
    CHECK(squared_norm(grad_c(in.state, in.dicts, M)) < 1e-24);

    FeatureState zero{zeros_like(in.state.C), zeros_like(in.state.U), zeros_like(in.state.V), 0};
    const Pyramid gu = grad_u(zero, in.dicts, in.x1);
    const Pyramid ref = scaled(ms_analyze(in.dicts.Du.synthesis(), in.x1), -1.0);
    CHECK(squared_norm(axpy(-1.0, ref, gu)) < 1e-24);
    const Pyramid gv = grad_v(zero, in.dicts, in.x2);
    CHECK(squared_norm(axpy(1.0, ms_analyze(in.dicts.Hv.synthesis(), in.x2), gv)) < 1e-24);
    const Tensor M0 = stack_channels({in.x1, in.x2});
    CHECK(squared_norm(axpy(1.0, lc_analyze(in.dicts, M0), grad_c(zero, in.dicts, M0))) < 1e-24);
  }

  TEST_CASE("gradients match central finite differences") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 20; ++trial) {
      const auto widths = trial % 2 ? std::vector<std::size_t>{4} : std::vector<std::size_t>{4, 6};
      const std::size_t size = trial % 2 ? 6 : 8;
      const auto in = random_instance(size, widths, 100 + trial);
      CHECK(fd_relative_error([&](const Pyramid& U) { return f_u(in, U); }, in.state.U,
                              grad_u(in.state, in.dicts, in.x1), rng) <= 1e-6);
      CHECK(fd_relative_error([&](const Pyramid& V) { return f_v(in, V); }, in.state.V,
                              grad_v(in.state, in.dicts, in.x2), rng) <= 1e-6);
      const Tensor M = build_stacked_residual(in.state, in.dicts, in.x1, in.x2);
      CHECK(fd_relative_error([&](const Pyramid& C) { return f_c(in, M, C); }, in.state.C,
                              grad_c(in.state, in.dicts, M), rng) <= 1e-6);
    }
  }

  TEST_CASE("stacked residual examples") {
    auto in = random_instance(6, {3}, 4);
    FeatureState s = in.state;
    s.U = zeros_like(s.U);
    s.V = zeros_like(s.V);
    CHECK(build_stacked_residual(s, in.dicts, in.x1, in.x2) == stack_channels({in.x1, in.x2}));
    const Tensor M = build_stacked_residual(in.state, in.dicts, in.x1, in.x2);
    const Tensor du = ms_synthesize(in.dicts.Du.synthesis(), in.state.U);
    const Tensor hv = ms_synthesize(in.dicts.Hv.synthesis(), in.state.V);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(M.at(i, j, 0) == in.x1.at(i, j) - du.at(i, j));
        CHECK(M.at(i, j, 1) == in.x2.at(i, j) - hv.at(i, j));
      }
    }
    // perfect unique fits leave only the common parts
    Instance fit = in;
    const Tensor common1 = ms_synthesize(fit.dicts.Dc.synthesis(), fit.state.C);
    const Tensor common2 = ms_synthesize(fit.dicts.Hc.synthesis(), fit.state.C);
    fit.x1 = common1 + du;
    fit.x2 = common2 + hv;
    const Tensor Mc = build_stacked_residual(fit.state, fit.dicts, fit.x1, fit.x2);
    CHECK(max_abs(Mc - stack_channels({common1, common2})) < 1e-12);
  }

  TEST_CASE("update steps: fixed point, saturation and descent") {
    auto in = random_instance(6, {4}, 5);
    SolverConfig cfg;
    cfg.lambda_u = cfg.lambda_v = cfg.lambda_c = 0.0;
    const auto steps = resolve_steps(in.dicts, cfg, 6, 6);

    Instance fit = in;
    fit.x1 = ms_synthesize(fit.dicts.Dc.synthesis(), fit.state.C) + ms_synthesize(fit.dicts.Du.synthesis(), fit.state.U);
    fit.x2 = ms_synthesize(fit.dicts.Hc.synthesis(), fit.state.C) + ms_synthesize(fit.dicts.Hv.synthesis(), fit.state.V);
    const Pyramid u = update_u(fit.state, fit.dicts, fit.x1, cfg, steps.u);
    CHECK(squared_norm(axpy(-1.0, fit.state.U, u)) < 1e-24);

    SolverConfig huge = cfg;
    huge.lambda_u = huge.lambda_v = huge.lambda_c = 1e6;
    CHECK(count_zeros(update_u(in.state, in.dicts, in.x1, huge, steps.u)) == 6 * 6 * 4);
    CHECK(count_zeros(update_v(in.state, in.dicts, in.x2, huge, steps.v)) == 6 * 6 * 4);
    const Tensor M = build_stacked_residual(in.state, in.dicts, in.x1, in.x2);
    CHECK(count_zeros(update_c(in.state, in.dicts, M, huge, steps.c)) == 6 * 6 * 4);

    SolverConfig l1 = cfg;
    l1.lambda_u = l1.lambda_v = l1.lambda_c = 0.05;
    const auto st = resolve_steps(in.dicts, l1, 6, 6);
    const double before_u = f_u(in, in.state.U) + l1.lambda_u * l1_norm(in.state.U);
    const Pyramid nu = update_u(in.state, in.dicts, in.x1, l1, st.u);
    CHECK(f_u(in, nu) + l1.lambda_u * l1_norm(nu) < before_u);
    const double before_v = f_v(in, in.state.V) + l1.lambda_v * l1_norm(in.state.V);
    const Pyramid nv = update_v(in.state, in.dicts, in.x2, l1, st.v);
    CHECK(f_v(in, nv) + l1.lambda_v * l1_norm(nv) < before_v);
    const double before_c = f_c(in, M, in.state.C) + l1.lambda_c * l1_norm(in.state.C);
    const Pyramid nc = update_c(in.state, in.dicts, M, l1, st.c);
    CHECK(f_c(in, M, nc) + l1.lambda_c * l1_norm(nc) < before_c);
  }

  TEST_CASE("exact fit is a fixed point of a full block") {
    auto in = random_instance(6, {3, 4}, 6);
    in.dicts = ModelDictionaries::random({3}, 3, 6);
    std::mt19937_64 rng(43);
    const auto shapes = in.dicts.Dc.synthesis().pyramid_shapes(6, 6);
    in.state = {oracle::random_pyramid(shapes, rng), oracle::random_pyramid(shapes, rng),
                oracle::random_pyramid(shapes, rng), 0};
    in.x1 = ms_synthesize(in.dicts.Dc.synthesis(), in.state.C) + ms_synthesize(in.dicts.Du.synthesis(), in.state.U);
    in.x2 = ms_synthesize(in.dicts.Hc.synthesis(), in.state.C) + ms_synthesize(in.dicts.Hv.synthesis(), in.state.V);
    SolverConfig cfg;
    cfg.lambda_u = cfg.lambda_v = cfg.lambda_c = 0.0;
    const auto steps = resolve_steps(in.dicts, cfg, 6, 6);
    const auto next = iterate_block(in.state, in.dicts, in.x1, in.x2, cfg, steps);
    CHECK(max_abs(next.C[0] - in.state.C[0]) < 1e-12);
    CHECK(max_abs(next.U[0] - in.state.U[0]) < 1e-12);
    CHECK(max_abs(next.V[0] - in.state.V[0]) < 1e-12);
    CHECK(next.t == 1);
  }

  TEST_CASE("iterate examples") {
    const auto in = random_instance(8, {4}, 7);
    SolverConfig cfg;
    cfg.stages = 0;
    const auto init = iterate(in.dicts, in.x1, in.x2, cfg);
    const auto ref = init_features(in.dicts, in.x1, in.x2, cfg);
    CHECK(init.state.C == ref.C);
    CHECK(init.trace.size() == 1);

    cfg.stages = 30;
    cfg.lambda_u = cfg.lambda_v = cfg.lambda_c = 0.0;
    const auto run = iterate(in.dicts, in.x1, in.x2, cfg);
    REQUIRE(run.trace.size() == 31);
    for (std::size_t t = 1; t < run.trace.size(); ++t) {
      CHECK(run.trace[t].total <= run.trace[t - 1].total * (1.0 + 1e-12));
    }
    CHECK(run.state.t == 30);
  }

  TEST_CASE("iterate recovers a planted exact-model instance") {
    std::mt19937_64 rng(44);
    auto d = ModelDictionaries::random({4}, 3, 8);
    const auto shapes = d.Dc.synthesis().pyramid_shapes(16, 16);
    auto sparse = [&] {
      Pyramid p = oracle::random_pyramid(shapes, rng);
      std::bernoulli_distribution keep(0.05);
      for (auto& t : p)
        for (auto& v : t.data()) v = keep(rng) ? v : 0.0;
      return p;
    };
    const Pyramid C = sparse(), U = sparse(), V = sparse();
    const Tensor x1 = ms_synthesize(d.Dc.synthesis(), C) + ms_synthesize(d.Du.synthesis(), U);
    const Tensor x2 = ms_synthesize(d.Hc.synthesis(), C) + ms_synthesize(d.Hv.synthesis(), V);
    SolverConfig cfg;
    cfg.stages = 200;
    cfg.lambda_u = cfg.lambda_v = cfg.lambda_c = 0.0;
    const auto run = iterate(d, x1, x2, cfg);
    const double fid0 = run.trace.front().fid1 + run.trace.front().fid2;
    const double fid = run.trace.back().fid1 + run.trace.back().fid2;
    CHECK(fid <= 1e-3 * fid0);
  }

  TEST_CASE("reconstruct examples") {
    auto in = random_instance(6, {3}, 9);
    CHECK(squared_norm(reconstruct({zeros_like(in.state.C), zeros_like(in.state.U), zeros_like(in.state.V), 0}, in.dicts)) == 0.0);
    const Eigen::VectorXd ref =
        oracle::synthesis_matrix(in.dicts.Qc.synthesis().base(), 6, 6) * oracle::vec(in.state.C) +
        oracle::synthesis_matrix(in.dicts.Qv.synthesis().base(), 6, 6) * oracle::vec(in.state.V);
    CHECK((oracle::vec(reconstruct(in.state, in.dicts)) - ref).cwiseAbs().maxCoeff() < 1e-12);

    ModelDictionaries delta;
    for (auto* p : {&delta.Dc, &delta.Du, &delta.Hc, &delta.Hv, &delta.Qc, &delta.Qv}) {
      *p = MultiScalePair(MultiScaleDictionary(DictionaryBank::delta(1, 3)));
    }
    std::mt19937_64 rng(45);
    FeatureState s{{oracle::random_tensor({5, 5, 1}, rng)}, {Tensor({5, 5, 1})}, {oracle::random_tensor({5, 5, 1}, rng)}, 0};
    CHECK(max_abs(reconstruct(s, delta) - (s.C[0] + s.V[0]).reshaped({5, 5})) < 1e-15);
  }

  TEST_CASE("objective examples") {
    auto in = random_instance(6, {3}, 10);
    SolverConfig cfg;
    cfg.lambda_u = 0.1;
    cfg.lambda_v = 0.2;
    cfg.lambda_c = 0.3;
    const FeatureState zero{zeros_like(in.state.C), zeros_like(in.state.U), zeros_like(in.state.V), 0};
    CHECK(objective_value(zero, in.dicts, in.x1, in.x2, cfg) ==
          doctest::Approx(0.5 * (squared_norm(in.x1) + squared_norm(in.x2))).epsilon(1e-14));

    const Tensor a = ms_synthesize(in.dicts.Dc.synthesis(), in.state.C), b = ms_synthesize(in.dicts.Du.synthesis(), in.state.U);
    const Tensor c = ms_synthesize(in.dicts.Hc.synthesis(), in.state.C), e = ms_synthesize(in.dicts.Hv.synthesis(), in.state.V);
    double fid = 0.0;
    for (std::size_t i = 0; i < 36; ++i) {
      fid += 0.5 * std::pow(in.x1[i] - a[i] - b[i], 2) + 0.5 * std::pow(in.x2[i] - c[i] - e[i], 2);
    }
    double l1c = 0, l1u = 0, l1v = 0;
    for (std::size_t i = 0; i < in.state.C[0].size(); ++i) {
      l1c += std::abs(in.state.C[0][i]);
      l1u += std::abs(in.state.U[0][i]);
      l1v += std::abs(in.state.V[0][i]);
    }
    const double expected = fid + 0.3 * l1c + 0.1 * l1u + 0.2 * l1v;
    CHECK(objective_value(in.state, in.dicts, in.x1, in.x2, cfg) == doctest::Approx(expected).epsilon(1e-12));

    SolverConfig none;
    none.lambda_u = none.lambda_v = none.lambda_c = 0.0;
    CHECK(objective_value(in.state, in.dicts, a + b, c + e, none) < 1e-24);
  }

  TEST_CASE("permuting channels leaves the solution unchanged") {
    const auto in = random_instance(8, {4}, 11);
    const std::vector<std::size_t> perm{3, 1, 0, 2};
    ModelDictionaries p = in.dicts;
    for (auto* pair : {&p.Dc, &p.Du, &p.Hc, &p.Hv, &p.Qc, &p.Qv}) {
      pair->synthesis() = MultiScaleDictionary(permute_filters(pair->synthesis().base(), perm));
    }
    const SolverConfig cfg = fixed_steps(0.05);
    const auto a = iterate(in.dicts, in.x1, in.x2, cfg);
    const auto b = iterate(p, in.x1, in.x2, cfg);
    CHECK(max_abs(reconstruct(a.state, in.dicts) - reconstruct(b.state, p)) < 1e-12);
  }

  TEST_CASE("larger lambda never yields fewer zeros") {
    const auto in = random_instance(8, {4}, 12);
    const Tensor M = build_stacked_residual(in.state, in.dicts, in.x1, in.x2);
    std::size_t prev_u = 0, prev_v = 0, prev_c = 0;
    for (double lambda : {0.0, 0.01, 0.1, 1.0, 10.0}) {
      SolverConfig cfg = fixed_steps(0.05);
      cfg.lambda_u = cfg.lambda_v = cfg.lambda_c = lambda;
      const std::size_t zu = count_zeros(update_u(in.state, in.dicts, in.x1, cfg, 0.05));
      const std::size_t zv = count_zeros(update_v(in.state, in.dicts, in.x2, cfg, 0.05));
      const std::size_t zc = count_zeros(update_c(in.state, in.dicts, M, cfg, 0.05));
      CHECK(zu >= prev_u);
      CHECK(zv >= prev_v);
      CHECK(zc >= prev_c);
      prev_u = zu;
      prev_v = zv;
      prev_c = zc;
    }
  }

  TEST_CASE("prox choices") {
    const auto in = random_instance(6, {3}, 13);
    SolverConfig cfg = fixed_steps(0.05);
    cfg.lambda_u = 1e3;
    cfg.prox = ProxKind::identity;
    CHECK(count_zeros(update_u(in.state, in.dicts, in.x1, cfg, 0.05)) == 0);
    cfg.prox = ProxKind::plugin;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.plugin = [](const Tensor& x, double) { return scaled(x, 0.0); };
    CHECK(squared_norm(update_u(in.state, in.dicts, in.x1, cfg, 0.05)) == 0.0);
    CHECK(parse_prox("soft") == ProxKind::soft_threshold);
    CHECK(parse_prox(to_string(ProxKind::identity)) == ProxKind::identity);
    CHECK_THROWS_AS(parse_prox("ista"), std::invalid_argument);
  }

  TEST_CASE("configuration validation") {
    SolverConfig cfg;
    cfg.stages = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.eta_c = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.lambda_v = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    const auto in = random_instance(8, {4}, 14);
    cfg = {};
    cfg.scale_levels = 2;
    CHECK_THROWS_AS(iterate(in.dicts, in.x1, in.x2, cfg), std::invalid_argument);
    Tensor bad = in.x1;
    bad[3] = std::nan("");
    CHECK_THROWS_AS(iterate(in.dicts, bad, in.x2, SolverConfig{}), std::domain_error);
  }

  TEST_CASE("untied mode uses the separate analysis operators") {
    auto in = random_instance(8, {4}, 15);
    ModelDictionaries untied = in.dicts;
    untied.untie();
    CHECK_FALSE(untied.tied());
    SolverConfig cfg = fixed_steps(0.05);
    cfg.tied = false;
    // freshly untied equals tied
    const auto a = iterate(in.dicts, in.x1, in.x2, fixed_steps(0.05));
    const auto b = iterate(untied, in.x1, in.x2, cfg);
    CHECK(max_abs(a.state.C[0] - b.state.C[0]) < 1e-12);
    untied.Du.analysis_mut() = scaled(untied.Du.analysis(), 0.5);
    untied.Lc_analysis->first = scaled(untied.Lc_analysis->first, 0.5);
    const auto c = iterate(untied, in.x1, in.x2, cfg);
    CHECK(max_abs(a.state.U[0] - c.state.U[0]) > 1e-6);
    CHECK(all_finite(c.state.C));
  }

  TEST_CASE("dictionaries survive a save/load round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "mccdic_test_dicts";
    std::filesystem::remove_all(dir);
    auto d = ModelDictionaries::random({4, 6}, 3, 16);
    save_dictionaries(dir.string(), d);
    const auto back = load_dictionaries(dir.string());
    CHECK(back.tied());
    CHECK(back.Dc.synthesis() == d.Dc.synthesis());
    CHECK(back.Qv.synthesis() == d.Qv.synthesis());
    d.untie();
    d.Hv.analysis_mut() = scaled(d.Hv.analysis(), 2.0);
    save_dictionaries(dir.string(), d);
    const auto untied = load_dictionaries(dir.string());
    CHECK_FALSE(untied.tied());
    CHECK(untied.Hv.analysis() == d.Hv.analysis());
    CHECK(untied.Lc_analysis->second == d.Lc_analysis->second);
    std::filesystem::remove_all(dir);
    CHECK_THROWS(load_dictionaries(dir.string()));
  }
}
