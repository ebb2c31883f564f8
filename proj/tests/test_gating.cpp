#include <catch2/catch_amalgamated.hpp>

#include "cove/gating.hpp"

using namespace cove;
using Catch::Approx;

TEST_CASE("softmax of symmetric and constant inputs") {
  auto a = softmax(std::vector<double>{0.0, 0.0});
  CHECK(a[0] == Approx(0.5));
  CHECK(a[1] == Approx(0.5));
  for (double c : {-3.0, 0.0, 42.0}) {
    auto b = softmax(std::vector<double>{c, c, c});
    for (double w : b) CHECK(w == Approx(1.0 / 3.0));
  }
}

TEST_CASE("softmax([1,2,3]) matches the direct evaluation") {
  auto w = softmax(std::vector<double>{1.0, 2.0, 3.0});
  CHECK(w[0] == Approx(0.09003057317038046).margin(1e-5));
  CHECK(w[1] == Approx(0.24472847105479764).margin(1e-5));
  CHECK(w[2] == Approx(0.66524095577482183).margin(1e-5));
}

TEST_CASE("softmax shift invariance") {
  std::vector<double> z{0.3, -1.2, 2.5, 0.0};
  auto base = softmax(z);
  for (double c : {1.0, -7.5, 300.0}) {
    std::vector<double> shifted = z;
    for (auto& x : shifted) x += c;
    auto w = softmax(shifted);
    std::size_t arg_a = std::max_element(base.begin(), base.end()) - base.begin();
    std::size_t arg_b = std::max_element(w.begin(), w.end()) - w.begin();
    CHECK(arg_a == arg_b);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(w[i] == Approx(base[i]).margin(1e-12));
  }
}

TEST_CASE("simplex property holds for random logits") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng.below(6);
    std::vector<double> z(n);
    for (auto& x : z) x = rng.uniform(-30.0, 30.0);
    GateWeights gw;
    gw.weights = softmax(z);
    gw.active_set.resize(n);
    CHECK(gw.on_simplex());
  }
}

TEST_CASE("gate_forward: zero weights give the uniform gate") {
  GateParams params;
  params.num_experts = 3;
  params.input_dim = 6;
  params.w.assign(18, 0.0f);
  std::vector<std::vector<double>> inputs{{1.0, 2.0}, {0.5, -1.0}, {3.0, 3.0}};
  GateWeights gw = gate_forward(inputs, params);
  REQUIRE(gw.active_set.size() == 3);
  for (double w : gw.weights) CHECK(w == Approx(1.0 / 3.0));
}

TEST_CASE("gate_forward matches a hand matrix multiply") {
  // n=2, d=1, inputs [1],[2]; W rows (per concat slot) map to logits [1,2]
  GateParams params;
  params.num_experts = 2;
  params.input_dim = 2;
  params.w = {1.0f, 0.0f,   // concat slot 1 (expert 1 input)
              0.0f, 1.0f};  // concat slot 2 (expert 2 input)
  std::vector<std::vector<double>> inputs{{1.0}, {2.0}};
  GateWeights gw = gate_forward(inputs, params);
  CHECK(gw.weights[0] == Approx(0.2689414213699951).margin(1e-9));
  CHECK(gw.weights[1] == Approx(0.7310585786300049).margin(1e-9));
}

TEST_CASE("gate_forward rejects dimension mismatches") {
  GateParams params;
  params.num_experts = 2;
  params.input_dim = 4;
  params.w.assign(8, 0.0f);
  std::vector<std::vector<double>> bad_count{{1.0, 0.0}};
  CHECK_THROWS_AS(gate_forward(bad_count, params), std::invalid_argument);
  std::vector<std::vector<double>> bad_dim{{1.0, 0.0}, {1.0}};
  CHECK_THROWS_AS(gate_forward(bad_dim, params), std::invalid_argument);
}

TEST_CASE("paper case-study weights sit on the simplex") {
  GateWeights gw;
  gw.weights = {0.0138, 0.2435, 0.0262, 0.7166};
  gw.active_set = {0, 1, 2, 3};
  CHECK(gw.on_simplex(1e-3));
}

TEST_CASE("topk_gate with k = n reproduces softmax") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 1 + rng.below(5);
    std::vector<double> z(n);
    for (auto& x : z) x = rng.uniform(-5.0, 5.0);
    auto full = softmax(z);
    GateWeights gw = topk_gate(z, n);
    for (std::size_t i = 0; i < n; ++i) CHECK(gw.weights[i] == Approx(full[i]).margin(1e-12));
  }
}

TEST_CASE("topk_gate keeps the top pair") {
  GateWeights gw = topk_gate(std::vector<double>{1.0, 2.0, 3.0, 4.0}, 2);
  CHECK(gw.weights[0] == 0.0);
  CHECK(gw.weights[1] == 0.0);
  CHECK(gw.weights[2] == Approx(0.2689414213699951).margin(1e-9));
  CHECK(gw.weights[3] == Approx(0.7310585786300049).margin(1e-9));
  CHECK(gw.active_set == std::vector<std::size_t>{2, 3});
}

TEST_CASE("topk_gate k=1 is one-hot at the argmax") {
  GateWeights gw = topk_gate(std::vector<double>{-1.0, 5.0, 2.0}, 1);
  CHECK(gw.weights == std::vector<double>{0.0, 1.0, 0.0});
}

TEST_CASE("topk_gate sparsity and tie-breaking") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 2 + rng.below(5);
    std::size_t k = 1 + rng.below(n);
    std::vector<double> z(n);
    for (auto& x : z) x = rng.uniform(-2.0, 2.0);
    GateWeights gw = topk_gate(z, k);
    std::size_t zeros = std::count(gw.weights.begin(), gw.weights.end(), 0.0);
    CHECK(zeros == n - k);
    CHECK(gw.on_simplex());
  }
  // ties resolve to the lower index
  GateWeights tie = topk_gate(std::vector<double>{1.0, 1.0, 1.0}, 2);
  CHECK(tie.active_set == std::vector<std::size_t>{0, 1});
  CHECK(tie.weights[2] == 0.0);
}

TEST_CASE("topk_gate rejects k out of range") {
  std::vector<double> z{1.0, 2.0};
  CHECK_THROWS_AS(topk_gate(z, 0), std::invalid_argument);
  CHECK_THROWS_AS(topk_gate(z, 3), std::invalid_argument);
}

TEST_CASE("uniform_gate") {
  CHECK(uniform_gate(1).weights == std::vector<double>{1.0});
  auto g4 = uniform_gate(4);
  for (double w : g4.weights) CHECK(w == Approx(0.25));
  auto g3 = uniform_gate(3);
  for (double w : g3.weights) CHECK(w == Approx(1.0 / 3.0));
  CHECK_THROWS_AS(uniform_gate(0), std::invalid_argument);
}
