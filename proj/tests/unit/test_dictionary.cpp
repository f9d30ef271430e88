#include <Eigen/SVD>
#include <cmath>
#include <random>

#include "doctest.h"
#include "mccdic/dictionary.hpp"
#include "oracles.hpp"

using namespace mccdic;

namespace {

double rel_adjoint_gap(double lhs, double rhs) { return std::abs(lhs - rhs) / (std::abs(lhs) + 1e-30); }

double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_SUITE("dictionary") {
  TEST_CASE("delta filter synthesizes the identity") {
    std::mt19937_64 rng(10);
    const Tensor img = oracle::random_tensor({6, 7}, rng);
    const auto delta = DictionaryBank::delta(1, 3);
    CHECK(synthesize(delta, img.reshaped({6, 7, 1})) == img);
    CHECK(synthesize(delta, img) == img);
    CHECK(analyze(delta, img) == img.reshaped({6, 7, 1}));
  }

  TEST_CASE("two delta filters superpose") {
    std::mt19937_64 rng(11);
    const Tensor a = oracle::random_tensor({5, 5}, rng);
    const Tensor b = oracle::random_tensor({5, 5}, rng);
    const Tensor out = synthesize(DictionaryBank::delta(2, 3), stack_channels({a, b}));
    CHECK(max_abs(out - (a + b)) == 0.0);
  }

  TEST_CASE("analysis of zeros is zero") {
    std::mt19937_64 rng(12);
    const auto bank = DictionaryBank::random(4, 3, 1, rng);
    CHECK(squared_norm(analyze(bank, Tensor({6, 6}))) == 0.0);
  }

  TEST_CASE("synthesis and analysis match the dense operator matrix") {
    std::mt19937_64 rng(13);
    for (std::size_t p : {1u, 2u}) {
      for (std::size_t n : {1u, 3u, 5u}) {
        const auto bank = DictionaryBank::random(3, n, p, rng);
        const Eigen::MatrixXd A = oracle::synthesis_matrix(bank, 5, 5);
        const Tensor f = oracle::random_tensor({5, 5, 3}, rng);
        const Tensor y = oracle::random_tensor(p == 1 ? Shape{5, 5} : Shape{5, 5, p}, rng);
        CHECK(max_abs_diff(oracle::vec(synthesize(bank, f)), A * oracle::vec(f)) < 1e-12);
        CHECK(max_abs_diff(oracle::vec(analyze(bank, y)), A.transpose() * oracle::vec(y)) < 1e-12);
      }
    }
  }

  TEST_CASE("channel mismatches are rejected") {
    std::mt19937_64 rng(14);
    const auto bank = DictionaryBank::random(3, 3, 1, rng);
    CHECK_THROWS_AS(synthesize(bank, Tensor({4, 4, 2})), ShapeError);
    CHECK_THROWS_AS(analyze(bank, Tensor({4, 4, 2})), ShapeError);
    CHECK_THROWS_AS(DictionaryBank(Tensor({2, 3, 4, 1})), ShapeError);
  }

  TEST_CASE("single-level multi-scale equals the plain bank") {
    std::mt19937_64 rng(15);
    const auto bank = DictionaryBank::random(4, 3, 1, rng);
    const MultiScaleDictionary ms(bank);
    const Tensor f = oracle::random_tensor({6, 6, 4}, rng);
    const Tensor y = oracle::random_tensor({6, 6}, rng);
    CHECK(ms_synthesize(ms, {f}) == synthesize(bank, f));
    CHECK(ms_analyze(ms, y)[0] == analyze(bank, y));
    CHECK(squared_norm(ms_synthesize(ms, ms.zero_features(6, 6))) == 0.0);
  }

  TEST_CASE("two-level dictionary matches the composed dense operator") {
    std::mt19937_64 rng(16);
    for (std::size_t levels : {2u, 3u}) {
      const auto ms = MultiScaleDictionary::random(default_widths(4, levels), 3, 1, rng);
      const Eigen::MatrixXd A = oracle::ms_synthesis_matrix(ms, 8, 8);
      const Pyramid f = oracle::random_pyramid(ms.pyramid_shapes(8, 8), rng);
      const Tensor y = oracle::random_tensor({8, 8}, rng);
      CHECK(max_abs_diff(oracle::vec(ms_synthesize(ms, f)), A * oracle::vec(f)) < 1e-11);
      CHECK(max_abs_diff(oracle::vec(ms_analyze(ms, y)), A.transpose() * oracle::vec(y)) < 1e-11);
      CHECK(squared_norm(ms_analyze(ms, Tensor({8, 8}))) == 0.0);
    }
  }

  TEST_CASE("adjoint identity over random trials") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
      const auto bank = DictionaryBank::random(1 + trial % 8, 3, 1 + trial % 2, rng);
      const Tensor f = oracle::random_tensor({9, 7, bank.count()}, rng);
      const Tensor y = oracle::random_tensor({9, 7, bank.channels()}, rng);
      const double lhs = dot(synthesize_channels(bank, f), y);
      const double rhs = dot(f, analyze(bank, y));
      CHECK(rel_adjoint_gap(lhs, rhs) < 1e-10);

      const auto ms = MultiScaleDictionary::random({4, 6}, 3, 1, rng);
      const Pyramid g = oracle::random_pyramid(ms.pyramid_shapes(8, 12), rng);
      const Tensor z = oracle::random_tensor({8, 12}, rng);
      CHECK(rel_adjoint_gap(dot(ms_synthesize(ms, g), z), dot(g, ms_analyze(ms, z))) < 1e-10);
    }
  }

  TEST_CASE("zero insertion and decimation are adjoint") {
    std::mt19937_64 rng(18);
    const Tensor c = oracle::random_tensor({3, 4, 2}, rng);
    const Tensor f = oracle::random_tensor({6, 8, 2}, rng);
    CHECK(rel_adjoint_gap(dot(zero_insert(c), f), dot(c, decimate(f))) < 1e-12);
    CHECK(decimate(zero_insert(c)) == c);
  }

  TEST_CASE("linearity") {
    std::mt19937_64 rng(19);
    const auto ms = MultiScaleDictionary::random({3, 5}, 3, 1, rng);
    const Pyramid f = oracle::random_pyramid(ms.pyramid_shapes(8, 8), rng);
    const Pyramid g = oracle::random_pyramid(ms.pyramid_shapes(8, 8), rng);
    const double alpha = -1.7;
    const Tensor lhs = ms_synthesize(ms, axpy(alpha, f, g));
    const Tensor rhs = axpy(alpha, ms_synthesize(ms, f), ms_synthesize(ms, g));
    CHECK(max_abs(lhs - rhs) <= 1e-12 * max_abs(rhs));
    const Tensor y = oracle::random_tensor({8, 8}, rng), z = oracle::random_tensor({8, 8}, rng);
    const Pyramid la = ms_analyze(ms, axpy(alpha, y, z));
    const Pyramid ra = axpy(alpha, ms_analyze(ms, y), ms_analyze(ms, z));
    for (std::size_t l = 0; l < la.size(); ++l) CHECK(max_abs(la[l] - ra[l]) <= 1e-12 * max_abs(ra[l]));
  }

  TEST_CASE("operator norm examples") {
    CHECK(operator_norm(DictionaryBank::delta(1, 3), 8, 8) == doctest::Approx(1.0).epsilon(1e-12));
    std::mt19937_64 rng(20);
    const auto bank = DictionaryBank::random(3, 3, 1, rng);
    const double base = operator_norm(bank, 8, 8);
    CHECK(operator_norm(scaled(bank, 3.0), 8, 8) == doctest::Approx(3.0 * base).epsilon(1e-9));
    CHECK(operator_norm(DictionaryBank::zeros(2, 3), 8, 8) == 0.0);
  }

  TEST_CASE("operator norm matches the dense SVD on a 4x4 grid") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 5; ++trial) {
      const auto bank = DictionaryBank::random(2, 3, 1, rng);
      const Eigen::JacobiSVD<Eigen::MatrixXd> svd(oracle::synthesis_matrix(bank, 4, 4));
      // power iteration approaches the top singular value from below
      const double est = operator_norm(bank, 4, 4);
      CHECK(est == doctest::Approx(svd.singularValues()(0)).epsilon(1e-3));
      CHECK(est <= svd.singularValues()(0) * (1.0 + 1e-12));
      const auto ms = MultiScaleDictionary::random({2, 3}, 3, 1, rng);
      const Eigen::JacobiSVD<Eigen::MatrixXd> msvd(oracle::ms_synthesis_matrix(ms, 4, 4));
      const double ms_est = operator_norm(ms, 4, 4);
      CHECK(ms_est == doctest::Approx(msvd.singularValues()(0)).epsilon(1e-3));
      CHECK(ms_est <= msvd.singularValues()(0) * (1.0 + 1e-12));
    }
  }

  TEST_CASE("operator norm bounds every gain") {
    std::mt19937_64 rng(22);
    const auto bank = DictionaryBank::random(4, 3, 1, rng);
    const double nrm = operator_norm(bank, 10, 10);
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor f = oracle::random_tensor({10, 10, 4}, rng);
      CHECK(norm(synthesize(bank, f)) / norm(f) <= nrm * (1.0 + 1e-6));
    }
  }

  TEST_CASE("pyramid shapes need divisible sizes") {
    std::mt19937_64 rng(23);
    const auto ms = MultiScaleDictionary::random({4, 6, 8}, 3, 1, rng);
    CHECK(ms.pyramid_shapes(16, 8) == std::vector<Shape>{{16, 8, 4}, {8, 4, 6}, {4, 2, 8}});
    CHECK_THROWS_AS(ms.pyramid_shapes(10, 8), ShapeError);
    CHECK_THROWS_AS(MultiScaleDictionary(DictionaryBank::zeros(4, 3), {DictionaryBank::zeros(5, 3)}),
                    ShapeError);
  }

  TEST_CASE("stacked bank synthesizes both channels") {
    std::mt19937_64 rng(24);
    const auto d = DictionaryBank::random(3, 3, 1, rng);
    const auto h = DictionaryBank::random(3, 3, 1, rng);
    const auto l = stack_banks(d, h);
    const Tensor f = oracle::random_tensor({6, 6, 3}, rng);
    const Tensor out = synthesize(l, f);
    CHECK(max_abs(channel(out, 0) - synthesize(d, f)) < 1e-14);
    CHECK(max_abs(channel(out, 1) - synthesize(h, f)) < 1e-14);
  }

  TEST_CASE("filter permutation commutes with feature permutation") {
    std::mt19937_64 rng(25);
    const auto bank = DictionaryBank::random(4, 3, 1, rng);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    const Tensor f = oracle::random_tensor({5, 5, 4}, rng);
    Tensor pf({5, 5, 4});
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t k = 0; k < 4; ++k) pf.at(i, j, k) = f.at(i, j, perm[k]);
    CHECK(max_abs(synthesize(permute_filters(bank, perm), pf) - synthesize(bank, f)) < 1e-14);
  }

  TEST_CASE("random filters have unit norm") {
    std::mt19937_64 rng(26);
    const auto bank = DictionaryBank::random(6, 5, 2, rng);
    for (std::size_t k = 0; k < 6; ++k) CHECK(bank.filter_norm(k) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("tied and untied pairs") {
    std::mt19937_64 rng(27);
    UntiedPair pair(DictionaryBank::random(2, 3, 1, rng));
    CHECK(pair.tied());
    CHECK(&pair.analysis() == &pair.synthesis());
    pair.untie();
    CHECK_FALSE(pair.tied());
    CHECK(pair.analysis() == pair.synthesis());
    pair.analysis_mut().at(0, 1, 1, 0) += 0.5;
    CHECK_FALSE(pair.analysis() == pair.synthesis());
    pair.tie();
    CHECK(pair.tied());
  }

  TEST_CASE("width presets") {
    CHECK(large_preset_widths() == std::vector<std::size_t>{64, 96, 128});
    CHECK(default_widths(8, 2) == std::vector<std::size_t>{8, 12});
    CHECK(default_widths(8, 3) == std::vector<std::size_t>{8, 12, 16});
  }
}
