// Copyright 2026 the pmilm authors
// SPDX-License-Identifier: Apache-2.0

#include "pmilm/oracle.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

using namespace pmilm;

namespace {

RowMatrixXd matrix2x2(double a, double b, double c, double d) {
  RowMatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

RowMatrixXd random_matrix(int rows, int cols, Rng& rng, double scale) {
  RowMatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      m(r, c) = rng.uniform(-scale, scale);
    }
  }
  return m;
}

}  // namespace

TEST_CASE("joint counts normalize into a joint with marginals", "[oracle]") {
  const JointCounts j(matrix2x2(1, 3, 2, 2));
  CHECK(j.words() == 2);
  CHECK(j.contexts() == 2);
  CHECK(j.p_wc(0, 0) == 0.125);
  CHECK(j.p_wc(0, 1) == 0.375);
  CHECK(j.p_w(0) == 0.5);
  CHECK(j.p_w(1) == 0.5);
  CHECK(j.p_c(0) == 0.375);
  CHECK(j.p_c(1) == 0.625);
  CHECK(j.cond(0, 1) == 0.6);
}

TEST_CASE("joint counts reject degenerate inputs", "[oracle]") {
  CHECK_THROWS_AS(JointCounts(RowMatrixXd(0, 2)), std::invalid_argument);
  CHECK_THROWS_AS(JointCounts(matrix2x2(1, 1, -1, 1)), std::invalid_argument);
  CHECK_THROWS_AS(JointCounts(matrix2x2(0, 0, 0, 0)), std::invalid_argument);

  const JointCounts zero_col(matrix2x2(1, 0, 1, 0));
  CHECK_THROWS_AS(zero_col.cond(0, 1), std::domain_error);
}

TEST_CASE("an independent joint has pmi equal to -log k", "[oracle]") {
  Eigen::VectorXd pw(2), pc(3);
  pw << 0.3, 0.7;
  pc << 0.2, 0.5, 0.3;
  const JointCounts j = product_joint(pw, pc);

  const RowMatrixXd pmi1 = exact_pmi_matrix(j, 1);
  CHECK(pmi1.cwiseAbs().maxCoeff() <= 1e-12);

  const RowMatrixXd pmi4 = exact_pmi_matrix(j, 4);
  for (int w = 0; w < 2; ++w) {
    for (int c = 0; c < 3; ++c) {
      CHECK(pmi4(w, c) ==
            Catch::Approx(-1.3862943611198906).epsilon(0).margin(1e-12));
    }
  }
  CHECK_THROWS_AS(exact_pmi_matrix(j, 0), std::invalid_argument);
}

TEST_CASE("pmi matches hand-computed cells and is NaN on zero counts",
          "[oracle]") {
  RowMatrixXd n(3, 3);
  n << 1, 1, 0, 0, 1, 1, 1, 0, 1;
  const JointCounts j(n);

  // Every marginal is 1/3 and every occupied cell has p(w|c) = 1/2, so
  // pmi_1 = log(3/2) and pmi_2 = log(3/4) on the occupied cells.
  const RowMatrixXd pmi1 = exact_pmi_matrix(j, 1);
  const RowMatrixXd pmi2 = exact_pmi_matrix(j, 2);
  for (int w = 0; w < 3; ++w) {
    for (int c = 0; c < 3; ++c) {
      if (n(w, c) > 0) {
        CHECK(pmi1(w, c) ==
              Catch::Approx(0.4054651081081644).epsilon(0).margin(1e-14));
        CHECK(pmi2(w, c) ==
              Catch::Approx(-0.2876820724517809).epsilon(0).margin(1e-14));
      } else {
        CHECK(std::isnan(pmi1(w, c)));
      }
    }
  }
}

TEST_CASE("the expected objective at the zero factorization is -(1+k) log 2",
          "[oracle]") {
  Rng rng(5);
  const JointCounts j = random_joint(3, 4, rng);
  const RowMatrixXd w = RowMatrixXd::Zero(3, 2);
  const RowMatrixXd c = RowMatrixXd::Zero(4, 2);
  for (int k : {1, 7}) {
    CHECK(expected_neg_objective(w, c, j, k) ==
          Catch::Approx(-(1.0 + k) * std::log(2.0)).epsilon(0).margin(1e-12));
  }
}

TEST_CASE("the expected objective agrees with a per-context regrouping",
          "[oracle]") {
  Rng rng(6);
  const JointCounts j = random_joint(4, 3, rng);
  Rng wr = rng.split(1);
  const RowMatrixXd w = random_matrix(4, 2, wr, 1.0);
  const RowMatrixXd c = random_matrix(3, 2, wr, 1.0);
  const int k = 3;

  // Group by context: sum_c p(c) [ sum_w p(w|c) log sig(m) +
  //                                k sum_w p(w) log sig(-m) ].
  double grouped = 0.0;
  for (int cc = 0; cc < j.contexts(); ++cc) {
    double inner = 0.0;
    for (int ww = 0; ww < j.words(); ++ww) {
      const double m = w.row(ww).dot(c.row(cc));
      inner += j.cond(ww, cc) * log_sigmoid(m);
      inner += k * j.p_w(ww) * log_sigmoid(-m);
    }
    grouped += j.p_c(cc) * inner;
  }
  CHECK(expected_neg_objective(w, c, j, k) ==
        Catch::Approx(grouped).epsilon(0).margin(1e-12));
}

TEST_CASE("expected gradients match finite differences", "[oracle]") {
  Rng rng(7);
  const JointCounts j = random_joint(3, 3, rng);
  Rng wr = rng.split(1);
  RowMatrixXd w = random_matrix(3, 2, wr, 1.0);
  RowMatrixXd c = random_matrix(3, 2, wr, 1.0);
  const int k = 2;

  RowMatrixXd gw, gc;
  expected_neg_gradients(w, c, j, k, &gw, &gc);

  const double eps = 1e-5;
  double worst = 0.0;
  auto probe = [&](double& theta, double grad) {
    const double saved = theta;
    theta = saved + eps;
    const double up = expected_neg_objective(w, c, j, k);
    theta = saved - eps;
    const double down = expected_neg_objective(w, c, j, k);
    theta = saved;
    const double fd = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(grad - fd) /
                                (std::abs(grad) + std::abs(fd) + 1e-8));
  };
  for (int r = 0; r < 3; ++r) {
    for (int x = 0; x < 2; ++x) {
      probe(w(r, x), gw(r, x));
      probe(c(r, x), gc(r, x));
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("gradient ascent recovers the exact pmi factorization", "[oracle]") {
  SECTION("uniform 2x2 joint at k = 1") {
    const JointCounts j(matrix2x2(1, 1, 1, 1));
    Rng rng(8);
    const PmiOptimumResult res = verify_pmi_optimum(j, 1, 2, rng);
    CHECK(res.converged);
    CHECK(res.max_deviation <= 1e-3);
  }

  SECTION("full-rank factorization of a random 5x5 joint") {
    Rng jr(9);
    const JointCounts j = random_joint(5, 5, jr);
    Rng rng(10);
    const PmiOptimumResult res = verify_pmi_optimum(j, 2, 5, rng);
    CHECK(res.converged);
    CHECK(res.iterations > 0);
    CHECK(res.max_deviation <= 1e-3);
  }

  SECTION("deviation shrinks monotonically with the factorization rank") {
    Rng jr(9);
    const JointCounts j = random_joint(5, 5, jr);
    double prev = std::numeric_limits<double>::infinity();
    for (int d : {1, 2, 3, 5}) {
      Rng rng(100 + static_cast<std::uint64_t>(d));
      const PmiOptimumResult res = verify_pmi_optimum(j, 2, d, rng);
      CHECK(res.converged);
      CHECK(res.max_deviation <= prev + 1e-9);
      if (d == 1) {
        CHECK(res.max_deviation > 0.05);  // rank 1 cannot fit a generic 5x5
      }
      prev = res.max_deviation;
    }
  }

  SECTION("bad rank is rejected") {
    const JointCounts j(matrix2x2(1, 1, 1, 1));
    Rng rng(1);
    CHECK_THROWS_AS(verify_pmi_optimum(j, 1, 0, rng), std::invalid_argument);
  }
}

TEST_CASE("the nce posterior identity holds to rounding error", "[oracle]") {
  SECTION("equal logits against uniform noise sit at one half") {
    const int vocab = 6;
    const Eigen::VectorXd logits = Eigen::VectorXd::Constant(vocab, 0.7);
    const Eigen::VectorXd noise =
        Eigen::VectorXd::Constant(vocab, 1.0 / vocab);
    CHECK(verify_nce_posterior(logits, noise, 1) <= 1e-15);

    // Direct check of the value itself, not only the identity.
    const double log_z = std::log(static_cast<double>(vocab)) + 0.7;
    const double lhs = sigmoid(0.7 - log_z - std::log(1.0 / vocab));
    CHECK(lhs == Catch::Approx(0.5).epsilon(0).margin(1e-15));
  }

  SECTION("random instances") {
    Rng rng(11);
    for (int i = 0; i < 20; ++i) {
      Rng r = rng.split(static_cast<std::uint64_t>(i));
      const NcePosteriorInstance inst = random_nce_instance(5, r);
      CHECK(verify_nce_posterior(inst.logits, inst.noise, 3) <= 1e-12);
    }
  }

  SECTION("degenerate inputs are rejected") {
    const Eigen::VectorXd s = Eigen::VectorXd::Zero(3);
    const Eigen::VectorXd q = Eigen::VectorXd::Constant(2, 0.5);
    CHECK_THROWS_AS(verify_nce_posterior(s, q, 1), std::invalid_argument);
    CHECK_THROWS_AS(
        verify_nce_posterior(s, Eigen::VectorXd::Zero(3), 1),
        std::invalid_argument);
    CHECK_THROWS_AS(
        verify_nce_posterior(s, Eigen::VectorXd::Constant(3, 1.0 / 3), 0),
        std::invalid_argument);
  }
}

TEST_CASE("the posterior decays as the noise ratio grows", "[oracle]") {
  Rng rng(12);
  const NcePosteriorInstance inst = random_nce_instance(5, rng);
  const double log_z = logsumexp(inst.logits);

  double prev = 1.0;
  for (int k : {1, 10, 100, 1000}) {
    double max_post = 0.0;
    for (Eigen::Index w = 0; w < inst.logits.size(); ++w) {
      const double p_model = std::exp(inst.logits(w) - log_z);
      max_post = std::max(max_post, p_model / (p_model + k * inst.noise(w)));
    }
    CHECK(max_post < prev);
    prev = max_post;
  }
  CHECK(prev < 0.05);  // at k = 1000 nearly all mass is assigned to noise
}

TEST_CASE("renormalized exp(pmi) times the marginal recovers the conditional",
          "[oracle]") {
  Rng rng(13);
  const JointCounts j = random_joint(4, 4, rng);
  const int k = 3;
  const RowMatrixXd pmi = exact_pmi_matrix(j, k);

  for (int c = 0; c < j.contexts(); ++c) {
    std::vector<double> weight(static_cast<std::size_t>(j.words()));
    double z = 0.0;
    for (int w = 0; w < j.words(); ++w) {
      weight[static_cast<std::size_t>(w)] = std::exp(pmi(w, c)) * j.p_w(w);
      z += weight[static_cast<std::size_t>(w)];
    }
    for (int w = 0; w < j.words(); ++w) {
      CHECK(weight[static_cast<std::size_t>(w)] / z ==
            Catch::Approx(j.cond(w, c)).epsilon(0).margin(1e-12));
    }
  }
}
