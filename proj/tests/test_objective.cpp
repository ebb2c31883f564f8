#include <catch2/catch_amalgamated.hpp>

#include "cove/objective.hpp"

using namespace cove;
using Catch::Approx;

TEST_CASE("bpr_loss: equal scores give ln 2") {
  RankingBatch b{0.7, {0.7}};
  CHECK(bpr_loss(b) == Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("bpr_loss: margin 2 matches -ln sigmoid(2)") {
  RankingBatch b{1.0, {-1.0}};
  CHECK(bpr_loss(b) == Approx(0.1269280110429725).margin(1e-9));
}

TEST_CASE("bpr_loss: huge margins neither overflow nor go negative") {
  RankingBatch b{30.0, {0.0}};
  const double l = bpr_loss(b);
  CHECK(l < 1e-12);
  CHECK(l >= 0.0);
  RankingBatch worst{-50.0, {50.0}};
  CHECK(std::isfinite(bpr_loss(worst)));
  CHECK(bpr_loss(worst) == Approx(100.0).margin(1e-9));
}

TEST_CASE("bpr_loss averages over pairs") {
  RankingBatch b{0.0, {0.0, 0.0, 0.0}};
  CHECK(bpr_loss(b) == Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("bpr_max_loss: single negative reduces to bpr") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    RankingBatch b{rng.uniform(-5.0, 5.0), {rng.uniform(-5.0, 5.0)}};
    CHECK(std::abs(bpr_max_loss(b) - bpr_loss(b)) <= 1e-12);
  }
  RankingBatch eq{1.3, {1.3}};
  CHECK(bpr_max_loss(eq) == Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("bpr_max_loss: two equal negatives give ln 2") {
  RankingBatch b{0.0, {0.0, 0.0}};
  CHECK(bpr_max_loss(b) == Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("bpr_max_loss ignores easy negatives") {
  RankingBatch b{0.0, {0.0, -20.0}};
  CHECK(bpr_max_loss(b) == Approx(std::log(2.0)).margin(1e-6));
}

TEST_CASE("losses are nonnegative and decreasing in the positive score") {
  Rng rng(23);
  for (LossKind kind : {LossKind::kBpr, LossKind::kBprMax}) {
    for (int trial = 0; trial < 100; ++trial) {
      RankingBatch b;
      b.negative_scores.resize(1 + rng.below(6));
      for (auto& x : b.negative_scores) x = rng.uniform(-4.0, 4.0);
      b.positive_score = rng.uniform(-4.0, 4.0);
      const double l0 = ranking_loss(kind, b);
      CHECK(l0 >= 0.0);
      b.positive_score += 0.5;
      CHECK(ranking_loss(kind, b) < l0);
    }
  }
}

TEST_CASE("losses stay finite for score magnitudes up to 50") {
  Rng rng(29);
  for (LossKind kind : {LossKind::kBpr, LossKind::kBprMax}) {
    for (int trial = 0; trial < 200; ++trial) {
      RankingBatch b;
      b.positive_score = rng.uniform(-50.0, 50.0);
      b.negative_scores.resize(1 + rng.below(8));
      for (auto& x : b.negative_scores) x = rng.uniform(-50.0, 50.0);
      const double l = ranking_loss(kind, b);
      CHECK(std::isfinite(l));
      auto g = ranking_loss_grad(kind, b);
      CHECK(std::isfinite(g.d_positive));
      CHECK(all_finite(g.d_negatives));
    }
  }
}

TEST_CASE("loss gradients match central finite differences") {
  Rng rng(41);
  for (LossKind kind : {LossKind::kBpr, LossKind::kBprMax}) {
    for (int trial = 0; trial < 50; ++trial) {
      RankingBatch b;
      b.positive_score = rng.uniform(-3.0, 3.0);
      b.negative_scores.resize(1 + rng.below(5));
      for (auto& x : b.negative_scores) x = rng.uniform(-3.0, 3.0);
      auto g = ranking_loss_grad(kind, b);
      const double h = 1e-6;
      auto fd = [&](double& slot) {
        const double orig = slot;
        slot = orig + h;
        const double lp = ranking_loss(kind, b);
        slot = orig - h;
        const double lm = ranking_loss(kind, b);
        slot = orig;
        return (lp - lm) / (2.0 * h);
      };
      CHECK(fd(b.positive_score) == Approx(g.d_positive).margin(1e-5));
      for (std::size_t j = 0; j < b.negative_scores.size(); ++j)
        CHECK(fd(b.negative_scores[j]) == Approx(g.d_negatives[j]).margin(1e-5));
    }
  }
}

TEST_CASE("empty negative lists are rejected") {
  RankingBatch b{1.0, {}};
  CHECK_THROWS_AS(bpr_loss(b), std::invalid_argument);
  CHECK_THROWS_AS(bpr_max_loss(b), std::invalid_argument);
}

TEST_CASE("loss parsing") {
  CHECK(parse_loss("bpr") == LossKind::kBpr);
  CHECK(parse_loss("bpr-max") == LossKind::kBprMax);
  CHECK_THROWS_AS(parse_loss("hinge"), ConfigError);
}
