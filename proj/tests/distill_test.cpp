#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "normkd/distill.hpp"
#include "normkd/error.hpp"
#include "normkd/numcore/grad_check.hpp"
#include "oracle/extended.hpp"

namespace normkd {
namespace {

using Labels = std::vector<std::size_t>;

Matrix random_logits(std::size_t n, std::size_t c, std::mt19937_64& rng, double spread = 2.0) {
  std::normal_distribution<double> dist(0.0, spread);
  Matrix m(n, c);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

void expect_probs(const SoftDistribution& p, const std::vector<double>& expected, double tol) {
  ASSERT_EQ(p.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(p[i], expected[i], tol) << i;
}

// --- soften / norm_soften -------------------------------------------------

TEST(Soften, Examples) {
  expect_probs(soften(std::vector<double>{0, 0, 0}, 1), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-16);
  expect_probs(soften(std::vector<double>{1, 0}, 1), {0.7310585786300049, 0.2689414213699951},
               1e-15);
  expect_probs(soften(std::vector<double>{2, 0, -2}, 2),
               {0.6652409557748219, 0.2447284710547977, 0.09003057317038046}, 1e-15);
}

TEST(Soften, RejectsNonPositiveTemperature) {
  EXPECT_THROW(soften(std::vector<double>{1, 2}, 0.0), ContractError);
  EXPECT_THROW(soften(std::vector<double>{1, 2}, -1.0), ContractError);
}

TEST(Soften, HandlesHugeLogits) {
  const SoftDistribution p = soften(std::vector<double>{1000, 0, -1000}, 1);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[2], 0.0);
}

TEST(NormSoften, Examples) {
  expect_probs(norm_soften(std::vector<double>{2, 0, -2}, 1),
               {0.6652409557748219, 0.2447284710547977, 0.09003057317038046}, 1e-15);
  expect_probs(norm_soften(std::vector<double>{5, 5, 5}, 3.0), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-16);
}

TEST(NormSoften, PositiveScaleInvariance) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(8);
    std::normal_distribution<double> dist(0.0, 3.0);
    for (double& v : z) v = dist(rng);
    if (sample_std(z) < 1.0) continue;
    std::vector<double> scaled(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) scaled[i] = 10.0 * z[i];
    const auto a = norm_soften(z, 2.0);
    const auto b = norm_soften(scaled, 2.0);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(SoftDistribution, Validation) {
  EXPECT_NO_THROW(SoftDistribution::from_probs({0.25, 0.75}));
  EXPECT_THROW(SoftDistribution::from_probs({0.5, 0.6}), NumericError);
  EXPECT_THROW(SoftDistribution::from_probs({-0.1, 1.1}), NumericError);
}

// --- kl_divergence ----------------------------------------------------------

TEST(KlDivergence, Examples) {
  const auto p = SoftDistribution::from_probs({0.2, 0.3, 0.5});
  EXPECT_EQ(kl_divergence(p, p), 0.0);
  const auto a = SoftDistribution::from_probs({0.9, 0.1});
  const auto u = SoftDistribution::from_probs({0.5, 0.5});
  EXPECT_NEAR(kl_divergence(a, u), 0.36806420716849707, 1e-15);
  const auto one_hot = SoftDistribution::from_probs({1.0, 0.0});
  EXPECT_NEAR(kl_divergence(one_hot, u), std::log(2.0), 1e-15);
}

TEST(KlDivergence, ZeroStudentMassIsNumericError) {
  const auto t = SoftDistribution::from_probs({0.5, 0.5});
  const auto s = SoftDistribution::from_probs({1.0, 0.0});
  EXPECT_THROW(kl_divergence(t, s), NumericError);
  EXPECT_THROW(kl_divergence(t, SoftDistribution::from_probs({1.0})), DimensionError);
}

// --- kd_loss ------------------------------------------------------------------

TEST(KdLoss, IdenticalLogitsLeaveOnlyCrossEntropy) {
  std::mt19937_64 rng(41);
  const Matrix z = random_logits(4, 5, rng);
  const Labels y{0, 1, 2, 3};
  const LossReport r = kd_loss(z, z, y, 4.0, 0.1, 0.9);
  EXPECT_EQ(r.kld_part, 0.0);
  EXPECT_NEAR(r.total, 0.1 * r.ce_part, 1e-15);
  EXPECT_EQ(r.per_sample_weight, std::vector<double>(4, 16.0));
  EXPECT_EQ(r.batch_size, 4u);
}

TEST(KdLoss, ReducesToBareKl) {
  const std::vector<double> zs{0.3, -1.0, 2.0};
  const std::vector<double> zt{1.0, 0.5, -0.5};
  const LossReport r =
      kd_loss(Matrix::row_vector(zs), Matrix::row_vector(zt), Labels{2}, 1.0, 0.0, 1.0);
  EXPECT_NEAR(r.total, kl_divergence(soften(zt, 1), soften(zs, 1)), 1e-15);
}

TEST(KdLoss, ClosedFormExample) {
  const LossReport r = kd_loss(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{1, 0}}), Labels{0},
                               2.0, 0.0, 1.0);
  // 4 * KL(softmax([0.5, 0]) || [0.5, 0.5]) at 50 digits.
  const std::vector<double> zt{1, 0};
  const auto expected = 4 * oracle::kl(oracle::softmax(zt, 2), {oracle::Real(0.5), oracle::Real(0.5)});
  EXPECT_NEAR(r.total, static_cast<double>(expected), 1e-15);
  EXPECT_NEAR(r.total, 0.1211994479230636, 1e-15);
}

TEST(KdLoss, CrossEntropyAtUnitTemperature) {
  const Matrix zs = Matrix::from_rows({{2, 1, 0}});
  const LossReport r = kd_loss(zs, zs, Labels{1}, 8.0, 1.0, 0.0);
  const auto p = oracle::softmax(zs.row(0), 1);
  EXPECT_NEAR(r.ce_part, -static_cast<double>(boost::multiprecision::log(p[1])), 1e-15);
}

TEST(KdLoss, Errors) {
  EXPECT_THROW(kd_loss(Matrix(1, 3), Matrix(1, 3), Labels{3}, 4.0, 1, 1), ContractError);
  EXPECT_THROW(kd_loss(Matrix(1, 3), Matrix(2, 3), Labels{0}, 4.0, 1, 1), DimensionError);
  EXPECT_THROW(kd_loss(Matrix(1, 3), Matrix(1, 3), Labels{0}, 0.0, 1, 1), ContractError);
}

// --- multi-temperature --------------------------------------------------------

TEST(MultiTempPrediction, Examples) {
  const std::vector<double> z{0.4, -1.2, 2.5};
  const std::vector<double> one{3.0};
  const std::vector<double> twice{1.0, 1.0};
  const auto s3 = soften(z, 3.0);
  expect_probs(multi_temp_prediction(z, one), {s3[0], s3[1], s3[2]}, 0.0);
  const auto s1 = soften(z, 1.0);
  expect_probs(multi_temp_prediction(z, twice), {s1[0], s1[1], s1[2]}, 1e-16);
  const std::vector<double> temps{1, 2};
  expect_probs(multi_temp_prediction(std::vector<double>{2, 0}, temps),
               {0.8059278283039437, 0.19407217169605634}, 1e-15);
  EXPECT_THROW(multi_temp_prediction(z, std::vector<double>{}), ContractError);
}

TEST(MultiTempKld, Examples) {
  std::mt19937_64 rng(42);
  const Matrix z = random_logits(3, 4, rng);
  const std::vector<double> temps{1, 2, 4};
  EXPECT_EQ(multi_temp_kld(z, z, temps), 0.0);

  const Matrix zs = random_logits(3, 4, rng);
  const std::vector<double> single{3.0};
  EXPECT_EQ(multi_temp_kld(zs, z, single), kd_loss(zs, z, Labels{0, 1, 2}, 3.0, 0.1, 0.9).kld_part);

  const std::vector<double> t12{1, 2};
  const double v = multi_temp_kld(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{2, 0}}), t12);
  const std::vector<double> zt{2, 0};
  const auto expected =
      4 * oracle::kl(oracle::multi_softmax(zt, t12), {oracle::Real(0.5), oracle::Real(0.5)});
  EXPECT_NEAR(v, static_cast<double>(expected), 1e-15);
  EXPECT_NEAR(v, 0.8042924350992167, 1e-15);
}

// --- normkd_loss --------------------------------------------------------------

TEST(NormkdLoss, IdenticalLogits) {
  std::mt19937_64 rng(43);
  const Matrix z = random_logits(5, 6, rng);
  const LossReport r = normkd_loss(z, z, 2.0);
  EXPECT_EQ(r.total, 0.0);
  for (double w : r.per_sample_weight) EXPECT_GT(w, 0.0);
}

TEST(NormkdLoss, ClosedFormExample) {
  const LossReport r =
      normkd_loss(Matrix::from_rows({{0, 0, 0}}), Matrix::from_rows({{2, 0, -2}}), 1.0, 1e-8);
  ASSERT_EQ(r.per_sample_weight.size(), 1u);
  EXPECT_DOUBLE_EQ(r.per_sample_weight[0], 4.0);
  const std::vector<double> zt{2, 0, -2};
  const oracle::Real third = oracle::Real(1) / 3;
  const auto expected = 4 * oracle::kl(oracle::softmax(zt, 2), {third, third, third});
  EXPECT_NEAR(r.total, static_cast<double>(expected), 1e-14);
  EXPECT_NEAR(r.total, 1.0648668273126833, 1e-14);
  EXPECT_EQ(r.alpha, 0.0);
  EXPECT_EQ(r.beta, 1.0);
}

TEST(NormkdLoss, TeacherScaleMultipliesLossBySquare) {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix zs = random_logits(3, 5, rng);
    const Matrix zt = random_logits(3, 5, rng);
    Matrix scaled = zt;
    const double a = 3.5;
    for (double& v : scaled.data()) v *= a;
    const LossReport base = normkd_loss(zs, zt, 2.0);
    const LossReport big = normkd_loss(zs, scaled, 2.0);
    EXPECT_NEAR(big.total, a * a * base.total, 1e-12 * a * a * base.total);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(big.per_sample_weight[i], a * a * base.per_sample_weight[i],
                  1e-12 * big.per_sample_weight[i]);
    }
  }
}

TEST(NormkdLoss, ShapeMismatch) {
  EXPECT_THROW(normkd_loss(Matrix(2, 3), Matrix(2, 4), 2.0), DimensionError);
}

TEST(NormkdLoss, PopulationStdIsSelectable) {
  const Matrix zt = Matrix::from_rows({{2, 0, -2}});
  const LossReport pop = normkd_loss(Matrix(1, 3), zt, 1.0, 1e-8, StdKind::kPopulation);
  EXPECT_DOUBLE_EQ(pop.per_sample_weight[0], 8.0 / 3.0);
}

// --- distill_loss ----------------------------------------------------------------

TEST(DistillLoss, FixedIsKdLossBitForBit) {
  std::mt19937_64 rng(45);
  const Matrix zs = random_logits(4, 5, rng);
  const Matrix zt = random_logits(4, 5, rng);
  const Labels y{4, 0, 2, 1};
  const LossReport a = distill_loss(TemperatureRule::fixed(4), zs, zt, y, 0.1, 0.9);
  const LossReport b = kd_loss(zs, zt, y, 4.0, 0.1, 0.9);
  EXPECT_EQ(a.total, b.total);
  EXPECT_EQ(a.ce_part, b.ce_part);
  EXPECT_EQ(a.kld_part, b.kld_part);
}

TEST(DistillLoss, NormStdBatchIsMeanOfSingles) {
  std::mt19937_64 rng(46);
  const Matrix zs = random_logits(6, 5, rng);
  const Matrix zt = random_logits(6, 5, rng);
  const Labels y{0, 1, 2, 3, 4, 0};
  const LossReport batch = distill_loss(TemperatureRule::norm_std(2), zs, zt, y, 0.1, 0.9);
  double mean = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    mean += normkd_loss(Matrix::row_vector(zs.row(i)), Matrix::row_vector(zt.row(i)), 2.0).total;
  }
  mean /= 6.0;
  EXPECT_NEAR(batch.kld_part, mean, 1e-13);
  EXPECT_NEAR(batch.total, 0.1 * batch.ce_part + 0.9 * batch.kld_part, 1e-10);
}

TEST(DistillLoss, RangeUsesTeacherRangeTemperature) {
  const double t_v = 0.7;
  const LossReport r = distill_loss(TemperatureRule::range(t_v), Matrix::from_rows({{1, 0, 2}}),
                                    Matrix::from_rows({{3, -1, 0}}), Labels{0}, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(r.per_sample_weight[0], (4 * t_v) * (4 * t_v));
}

TEST(DistillLoss, MaxValWeights) {
  const LossReport r = distill_loss(TemperatureRule::max_val(2.0), Matrix::from_rows({{1, 0, 2}}),
                                    Matrix::from_rows({{3, -1, 0}}), Labels{0}, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(r.per_sample_weight[0], 36.0);
}

TEST(DistillLoss, MultiSetMatchesMultiTempKld) {
  std::mt19937_64 rng(47);
  const Matrix zs = random_logits(3, 4, rng);
  const Matrix zt = random_logits(3, 4, rng);
  const std::vector<double> temps{1, 2, 4};
  const LossReport r = distill_loss(TemperatureRule::multi_set(temps), zs, zt, Labels{0, 1, 2}, 0.1, 0.9);
  EXPECT_EQ(r.kld_part, multi_temp_kld(zs, zt, temps));
  EXPECT_EQ(r.per_sample_weight, std::vector<double>(3, 16.0));
}

TEST(DistillLoss, ReportTotalIsWeightedSum) {
  std::mt19937_64 rng(48);
  const std::vector<TemperatureRule> all{
      TemperatureRule::fixed(3), TemperatureRule::multi_set({1, 2}), TemperatureRule::norm_std(2),
      TemperatureRule::max_val(1), TemperatureRule::range(1)};
  for (const auto& rule : all) {
    const Matrix zs = random_logits(4, 3, rng);
    const Matrix zt = random_logits(4, 3, rng);
    const LossReport r = distill_loss(rule, zs, zt, Labels{0, 1, 2, 0}, 0.3, 0.7);
    EXPECT_NEAR(r.total, 0.3 * r.ce_part + 0.7 * r.kld_part, 1e-10) << rule.name();
    for (double w : r.per_sample_weight) EXPECT_GT(w, 0.0);
  }
}

TEST(DistillLoss, DetachingStudentScaleChangesGradientOnly) {
  std::mt19937_64 rng(49);
  const Matrix zs = random_logits(2, 4, rng);
  const Matrix zt = random_logits(2, 4, rng);
  const Labels y{0, 1};
  auto run = [&](bool detach) {
    Tape tape;
    const Var s = tape.leaf(zs);
    const LossTerms t = distill_loss(TemperatureRule::norm_std(2), s, zt, y, 0.1, 0.9,
                                     DistillOptions{detach});
    return std::pair{t.report.total, tape.backward(t.total)[s]};
  };
  const auto live = run(false);
  const auto detached = run(true);
  EXPECT_EQ(live.first, detached.first);
  EXPECT_NE(live.second, detached.second);
}

// --- combine ------------------------------------------------------------------------

TEST(Combine, IdentityAndEqualHalves) {
  Tape tape;
  const Var a = tape.leaf(Matrix(1, 1, 0.75));
  const std::vector<WeightedTerm> single{{1.0, a}};
  EXPECT_EQ(combine(single).value()(0, 0), 0.75);
  const std::vector<WeightedTerm> halves{{0.5, a}, {0.5, a}};
  EXPECT_EQ(combine(halves).value()(0, 0), 0.75);
  EXPECT_THROW(combine(std::vector<WeightedTerm>{}), ContractError);
}

TEST(Combine, GradientIsSumOfGradients) {
  std::mt19937_64 rng(50);
  const Matrix zs = random_logits(3, 4, rng);
  const Matrix zt = random_logits(3, 4, rng);
  const Labels y{0, 1, 2};
  auto grad_of = [&](int which) {
    Tape tape;
    const Var s = tape.leaf(zs);
    const Var normkd = normkd_loss(s, zt, 2.0).total;
    const Var external = kd_loss(s, zt, y, 4.0, 1.0, 0.0).total;
    Var out;
    if (which == 0) out = normkd;
    if (which == 1) out = external;
    if (which == 2) {
      const std::vector<WeightedTerm> terms{{1.0, normkd}, {1.0, external}};
      out = combine(terms);
    }
    return tape.backward(out)[s];
  };
  const Matrix g0 = grad_of(0);
  const Matrix g1 = grad_of(1);
  const Matrix g = grad_of(2);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(g.data()[i], g0.data()[i] + g1.data()[i], 1e-14);
  }
}

// --- gradients -------------------------------------------------------------------------

TEST(Gradients, EveryLossMatchesFiniteDifferences) {
  std::mt19937_64 rng(51);
  const Labels y{0, 3, 1};
  const std::vector<double> temps{1, 2, 4};
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix zt = random_logits(3, 5, rng);
    Matrix point = random_logits(3, 5, rng);
    // Keep every row's max clear of the epsilon floor so MaxVal is smooth there.
    for (std::size_t n = 0; n < 3; ++n) {
      const auto row = point.row(n);
      const double m = *std::max_element(row.begin(), row.end());
      if (m < 0.5) {
        for (double& v : row) v += 1.0 - m;
      }
    }
    const std::vector<GraphFn> fns{
        [&](Tape&, Var x) { return kd_loss(x, zt, y, 4.0, 0.1, 0.9).total; },
        [&](Tape&, Var x) { return multi_temp_kld(x, zt, temps); },
        [&](Tape&, Var x) { return normkd_loss(x, zt, 2.0).total; },
        [&](Tape&, Var x) {
          return distill_loss(TemperatureRule::max_val(1.0), x, zt, y, 0.1, 0.9).total;
        },
        [&](Tape&, Var x) {
          return distill_loss(TemperatureRule::range(0.5), x, zt, y, 0.1, 0.9).total;
        },
    };
    for (std::size_t i = 0; i < fns.size(); ++i) {
      EXPECT_LE(grad_check(fns[i], point, 1e-5), 1e-4) << "loss " << i << " trial " << trial;
    }
  }
}

// --- invariants ----------------------------------------------------------------------------

TEST(Invariants, MeanShiftCancels) {
  std::mt19937_64 rng(52);
  std::normal_distribution<double> dist(0.0, 4.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> z(10);
    for (double& v : z) v = dist(rng) + 3.0;
    double mu = 0.0;
    for (double v : z) mu += v;
    mu /= z.size();
    const double sigma = std::max(sample_std(z), 1e-8);
    std::vector<double> centered(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) centered[i] = z[i] - mu;
    const auto a = soften(centered, sigma);
    const auto b = soften(z, sigma);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(Invariants, SimplexArgmaxAndMonotoneSoftening) {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix z = random_logits(1, 7, rng);
    const auto row = z.row(0);
    const std::size_t arg = std::max_element(row.begin(), row.end()) - row.begin();
    double prev_max = 2.0;
    for (double t : {1.0, 2.0, 4.0, 8.0, 64.0}) {
      const auto p = soften(row, t);
      double sum = 0.0;
      for (double v : p.probs()) {
        EXPECT_GT(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
      const auto probs = p.probs();
      EXPECT_EQ(static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin()), arg);
      const double pmax = *std::max_element(probs.begin(), probs.end());
      EXPECT_LT(pmax, prev_max);
      prev_max = pmax;
    }
    EXPECT_LT(prev_max - 1.0 / 7.0, 0.05);
  }
}

}  // namespace
}  // namespace normkd
