#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "emmp/em.hpp"
#include "emmp/models.hpp"
#include "emmp/oracle.hpp"
#include "support/fixtures.hpp"
#include "support/random_model.hpp"

using namespace emmp;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an emmp::Error";
  return ErrorCode::SchemaError;
}

ParamAssignment bernoulli(double p1) { return {{"theta", CategoricalValue{1, 2, {1.0 - p1, p1}}}}; }

double p1_of(const ParamAssignment& t) { return std::get<CategoricalValue>(t.at("theta")).at(0, 1); }

}  // namespace

TEST(BruteMarginals, BernoulliPosteriorIsTheParameter) {
  const ModelGraph g = build_trivial();
  const auto b = oracle::brute_marginals(g, bernoulli(0.3));
  EXPECT_NEAR(b.edges[0][0], 0.7, 1e-15);
  EXPECT_NEAR(b.edges[0][1], 0.3, 1e-15);
  EXPECT_NEAR(b.log_evidence, 0.0, 1e-15);
}

TEST(BruteMarginals, UniformKernelGivesUniformMarginals) {
  ModelSpec s;
  s.variables = {{"A", 2}, {"B", 3}};
  s.factors = {{"f", {"A", "B"}, {TabularTerm{std::vector<double>(6, 1.0)}}}};
  const auto b = oracle::brute_marginals(build_graph(s), {});
  for (double v : b.edges[0]) EXPECT_NEAR(v, 0.5, 1e-15);
  for (double v : b.edges[1]) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(b.log_evidence, std::log(6.0), 1e-15);
}

TEST(BruteMarginals, RefusesHugeStateSpaces) {
  HmmSpec h;
  h.n = 24;
  const ModelGraph g = build_hmm(h, std::vector<std::size_t>(24, 0));
  EXPECT_EQ(code_of([&] { oracle::brute_marginals(g, default_assignment(g)); }), ErrorCode::TooLarge);
}

TEST(EnumerateQ, BernoulliHandValues) {
  const ModelGraph g = build_trivial();
  // Q(theta | theta_hat) = 0.7 log(1 - theta) + 0.3 log(theta) with theta_hat = 0.3.
  const auto q = oracle::enumerate_q(g, bernoulli(0.3), {bernoulli(0.3), bernoulli(0.5), bernoulli(0.0)});
  EXPECT_NEAR(q.q(0), 0.7 * std::log(0.7) + 0.3 * std::log(0.3), 1e-15);
  EXPECT_NEAR(q.q(1), std::log(0.5), 1e-15);
  EXPECT_EQ(q.q(2), -INFINITY);
}

TEST(EnumerateQ, ZeroLogZeroIsZero) {
  const ModelGraph g = build_trivial();
  const auto q = oracle::enumerate_q(g, bernoulli(0.0), {bernoulli(0.0), bernoulli(0.5)});
  EXPECT_EQ(q.q(0), 0.0);
  EXPECT_NEAR(q.q(1), std::log(0.5), 1e-15);
}

TEST(EnumerateQ, ThetaHatOutsidePriorSupport) {
  const ModelGraph g = build_trivial({}, DirichletRows{{2.0, 2.0}});
  EXPECT_EQ(code_of([&] { oracle::enumerate_q(g, bernoulli(1.0), {bernoulli(0.5)}); }), ErrorCode::PriorZero);
}

TEST(GlobalEmStep, BernoulliWithoutEvidenceStaysPut) {
  const ModelGraph g = build_trivial();
  EXPECT_NEAR(p1_of(oracle::global_em_step(g, bernoulli(0.37))), 0.37, 1e-15);
  oracle::ThetaGrid grid;
  grid.resolution = 101;
  EXPECT_NEAR(p1_of(oracle::global_em_step(g, bernoulli(0.37), grid)), 0.37, 1e-15);
  // Off-lattice theta-hat: the lattice argmax is the nearest lattice point.
  EXPECT_NEAR(p1_of(oracle::global_em_step(g, bernoulli(0.372), grid)), 0.37, 1e-12);
}

TEST(GlobalEmStep, SymmetricModelKeepsSymmetry) {
  HmmSpec h = support::desk_hmm_spec(4);
  h.initial = {0.5, 0.5};
  h.emission = {0.5, 0.5, 0.5, 0.5};
  const ModelGraph g = build_hmm(h, {0, 1, 0, 1});
  const ParamAssignment theta{{"A", CategoricalValue{2, 2, {0.5, 0.5, 0.5, 0.5}}}};
  const auto next = std::get<CategoricalValue>(oracle::global_em_step(g, theta).at("A"));
  for (double v : next.table) EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST(GlobalEmStep, ClosedFormsAgreeWithLatticeOnRandomModels) {
  support::ModelGenerator gen(21);
  for (int i = 0; i < 15; ++i) {
    support::RandomModelOptions opt;
    opt.max_hidden = 4;
    const ModelGraph g = build_graph(gen.model(opt).spec);
    const ParamAssignment theta = gen.assignment(g);
    const auto grid = oracle::default_theta_grid(g, 201);
    const auto closed = oracle::global_em_step(g, theta);
    const auto lattice = oracle::global_em_step_lattice(g, theta, grid);
    // Each block is maximized separately, so compare block values of Q.
    for (const auto& block : oracle::lattice_blocks(g, theta, grid)) {
      ParamAssignment a = theta, b = theta;
      a[block.parameter] = closed.at(block.parameter);
      b[block.parameter] = lattice.at(block.parameter);
      const auto q = oracle::enumerate_q(g, theta, {a, b});
      EXPECT_GE(q.q(0), q.q(1) - 1e-9 * std::max(1.0, std::abs(q.q(1)))) << "model " << i << " " << block.parameter;
    }
  }
}

TEST(AuxFunction, EqualArgumentsGiveF) {
  const ModelGraph g = build_hmm(support::desk_hmm_spec(3), {0, 1, 1});
  const auto t = support::desk_init();
  EXPECT_NEAR(oracle::aux_function(g, t, t), oracle::brute_f(g, t), 1e-15);
}

TEST(AuxFunction, BernoulliHandValue) {
  const ModelGraph g = build_trivial();
  const double expected = 1.0 + 0.75 * std::log(1.0 / 3.0) + 0.25 * std::log(3.0);
  EXPECT_NEAR(oracle::aux_function(g, bernoulli(0.25), bernoulli(0.75)), expected, 1e-15);
}

TEST(AuxFunction, DisjointSupportIsMinusInfinity) {
  const ModelGraph g = build_trivial();
  EXPECT_EQ(oracle::aux_function(g, bernoulli(0.0), bernoulli(1.0)), -INFINITY);
}

TEST(AuxFunction, ArgmaxCoincidesWithQ) {
  const ModelGraph g = build_hmm(support::desk_hmm_spec(3), {0, 1, 1});
  const auto hat = support::desk_init();
  std::vector<ParamAssignment> cand;
  for (int i = 1; i < 20; ++i)
    for (int j = 1; j < 20; ++j) cand.push_back({{"A", CategoricalValue{2, 2, {i / 20.0, 1 - i / 20.0, j / 20.0, 1 - j / 20.0}}}});
  const auto q = oracle::enumerate_q(g, hat, cand);
  std::size_t best_q = 0, best_aux = 0;
  double best_aux_value = -INFINITY;
  for (std::size_t c = 0; c < cand.size(); ++c) {
    if (q.q(c) > q.q(best_q)) best_q = c;
    const double a = oracle::aux_function(g, cand[c], hat);
    if (a > best_aux_value) {
      best_aux_value = a;
      best_aux = c;
    }
  }
  EXPECT_EQ(best_q, best_aux);
}
