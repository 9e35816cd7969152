#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "arflow/prior.hpp"

using namespace arflow;

namespace {

Chunk make_chunk_at(int index, double t, const ArrayXd& data) {
  Chunk ch;
  ch.index = index;
  ch.t = t;
  ch.frames = 1;
  ch.h = 1;
  ch.w = int(data.size());
  ch.c = 1;
  ch.data = data;
  return ch;
}

ContextCache ctx_with(const ArrayXd& entry, int finalized) {
  ContextCache ctx;
  ctx.entries.push_back(entry);
  ctx.finalized = finalized;
  return ctx;
}

// A Gaussian field with a constant bias added to every component; used to
// confirm the unperturbed field wins the CFM objective.
struct BumpedGauss {
  GaussARPrior base;
  double bump = 0.0;
};

ArrayXd vector_field(const BumpedGauss& p, const Chunk& chunk,
                     const ContextCache& ctx) {
  return arflow::vector_field(p.base, chunk, ctx) + p.bump;
}

}  // namespace

TEST_CASE("chunk variance is sigma_p^2 first, then the stationary residual") {
  GaussARPrior p = make_gauss_prior(0.8, 0.5, 0.1);
  CHECK(p.prior_var(1) == 0.25);
  CHECK(p.prior_var(2) == doctest::Approx((1.0 - 0.64) * 0.25).epsilon(1e-15));
  CHECK(p.prior_var(5) == p.prior_var(2));
  CHECK_THROWS_AS(make_gauss_prior(1.0, 0.5, 0.0), ParamError);
  CHECK_THROWS_AS(make_gauss_prior(-1.2, 0.5, 0.0), ParamError);
  CHECK_THROWS_AS(make_gauss_prior(0.5, 0.0, 0.0), ParamError);
}

TEST_CASE("half-time unit-variance field collapses to the negated mean") {
  // c(t) = (1-t) var / ((1-t)^2 var + t^2) equals exactly 1 at t = 1/2,
  // var = 1, so the field is identically -mu0 regardless of state.
  GaussARPrior p = make_gauss_prior(0.0, 1.0, 0.0);
  NoiseStream s("z", 1);
  ContextCache ctx;
  Chunk ch = make_chunk_at(1, 0.5, s.normal_array(16));
  ArrayXd v = vector_field(p, ch, ctx);
  CHECK((v == 0.0).all());

  GaussARPrior q = make_gauss_prior(0.0, 1.0, 0.25);
  ArrayXd dyadic(4);
  dyadic << 0.5, -0.25, 1.0, 0.125;
  Chunk ch2 = make_chunk_at(1, 0.5, dyadic);
  ArrayXd v2 = vector_field(q, ch2, ctx);
  CHECK((v2 == -0.25).all());
}

TEST_CASE("at t = 1 the field is state minus prior mean, exactly") {
  GaussARPrior p = make_gauss_prior(0.6, 0.7, 0.3);
  NoiseStream s("z", 2);
  ArrayXd prev = s.normal_array(8);
  ContextCache ctx = ctx_with(prev, 1);
  Chunk ch = make_chunk_at(2, 1.0, s.normal_array(8));
  ArrayXd v = vector_field(p, ch, ctx);
  CHECK((v == ch.data - 0.6 * prev).all());
}

TEST_CASE("denoised estimate reproduces the posterior mean") {
  GaussARPrior p = make_gauss_prior(0.8, 0.9, 0.2);
  NoiseStream s("z", 3);
  ArrayXd prev = s.normal_array(8);
  ContextCache ctx = ctx_with(prev, 1);

  Chunk half = make_chunk_at(2, 0.5, s.normal_array(8));
  ArrayXd zhat = denoised_estimate(p, half, ctx);
  ArrayXd want1 = gauss_posterior_mean(p, half.data, half.t, 2, ctx);
  CHECK((zhat - want1).abs().maxCoeff() < 1e-13);

  Chunk odd = make_chunk_at(2, 0.3, s.normal_array(8));
  ArrayXd zh2 = denoised_estimate(p, odd, ctx);
  ArrayXd want2 = gauss_posterior_mean(p, odd.data, odd.t, 2, ctx);
  CHECK((zh2 - want2).abs().maxCoeff() < 1e-13);

  // at the exactly-solvable point the field vanishes and the estimate is
  // the state itself, bit for bit
  GaussARPrior unit = make_gauss_prior(0.0, 1.0, 0.0);
  ContextCache empty;
  Chunk solv = make_chunk_at(1, 0.5, s.normal_array(8));
  ArrayXd zh3 = denoised_estimate(unit, solv, empty);
  CHECK((zh3 == solv.data).all());
}

TEST_CASE("posterior mean matches a monte-carlo conditional average") {
  // z0 ~ N(rho prev, sigma_c^2), z_t = (1-t) z0 + t xi.  The conditional
  // mean E[z0 | z_t] is affine in z_t with slope c and intercept
  // (1 - (1-t) c) rho prev; least squares over many draws recovers both.
  const double rho = 0.8, sigma_p = 1.0, t = 0.3, prev = 0.6;
  GaussARPrior p = make_gauss_prior(rho, sigma_p, 0.0);
  const double var = p.prior_var(2);
  const double c =
      (1.0 - t) * var / ((1.0 - t) * (1.0 - t) * var + t * t);

  NoiseStream s("mc", 2024);
  const int n = 100000;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double z0 = rho * prev + std::sqrt(var) * s.normal();
    const double zt = (1.0 - t) * z0 + t * s.normal();
    sx += zt;
    sy += z0;
    sxx += zt * zt;
    sxy += zt * z0;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  CHECK(slope == doctest::Approx(c).epsilon(0.015));
  CHECK(std::abs(intercept - (1.0 - (1.0 - t) * c) * rho * prev) < 0.01);

  ContextCache ctx = ctx_with(ArrayXd::Constant(1, prev), 1);
  ArrayXd zt_probe = ArrayXd::Constant(1, 0.4);
  ArrayXd post = gauss_posterior_mean(p, zt_probe, t, 2, ctx);
  CHECK(std::abs(post[0] - (intercept + slope * 0.4)) < 0.02);
}

TEST_CASE("at the exactly-solvable point the denoiser is the identity") {
  // slope c = 1 at t = 1/2 with unit variance: the conditional mean of the
  // clean state given the noisy state is the noisy state itself.
  const double t = 0.5;
  NoiseStream s("mc1", 77);
  const int n = 100000;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double z0 = s.normal();
    const double zt = (1.0 - t) * z0 + t * s.normal();
    sx += zt;
    sy += z0;
    sxx += zt * zt;
    sxy += zt * z0;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("context updates keep history per prior family") {
  NoiseStream s("ctx", 4);
  ArrayXd z1 = s.normal_array(6), z2 = s.normal_array(6);

  GaussARPrior gp = make_gauss_prior(0.5, 1.0, 0.0);
  ContextCache ctx;
  ctx = update_context(gp, ctx, make_chunk_at(1, 0.0, z1));
  CHECK(ctx.entries.size() == 1);
  CHECK(ctx.finalized == 1);
  ctx = update_context(gp, ctx, make_chunk_at(2, 0.0, z2));
  CHECK(ctx.entries.size() == 1);  // markov: newest chunk only
  CHECK(ctx.finalized == 2);
  CHECK((ctx.entries[0] == z2).all());

  LearnedPrior lp = make_learned_prior(6, 4, 0);
  ContextCache lctx;
  lctx = update_context(lp, lctx, make_chunk_at(1, 0.0, z1));
  lctx = update_context(lp, lctx, make_chunk_at(2, 0.0, z2));
  CHECK(lctx.entries.size() == 2);
  CHECK(lctx.finalized == 2);
  CHECK((lctx.entries[0] == z1).all());

  CHECK_THROWS_AS(update_context(gp, ctx, make_chunk_at(3, 0.5, z1)),
                  ParamError);
  CHECK_THROWS_AS(update_context(gp, ctx, make_chunk_at(5, 0.0, z1)),
                  ParamError);
}

TEST_CASE("field arguments are validated") {
  GaussARPrior p = make_gauss_prior(0.5, 1.0, 0.0);
  NoiseStream s("val", 5);
  ArrayXd z = s.normal_array(4);
  ContextCache ctx;
  CHECK_THROWS_AS(vector_field(p, make_chunk_at(1, 0.0, z), ctx), ParamError);
  CHECK_THROWS_AS(vector_field(p, make_chunk_at(1, 1.5, z), ctx), ParamError);
  CHECK_THROWS_AS(vector_field(p, make_chunk_at(2, 0.5, z), ctx), ParamError);
  ContextCache bad = ctx_with(s.normal_array(3), 1);  // entry dim mismatch
  CHECK_THROWS_AS(vector_field(p, make_chunk_at(2, 0.5, z), bad), ShapeError);

  LearnedPrior lp = make_learned_prior(8, 4, 0);
  CHECK_THROWS_AS(vector_field(lp, make_chunk_at(1, 0.5, z), ctx), ShapeError);
}

TEST_CASE("summary over an empty context is zero, else the entry mean") {
  ContextCache ctx;
  CHECK((context_summary(ctx, 3) == 0.0).all());
  ctx.entries.push_back(ArrayXd::Constant(3, 1.0));
  ctx.entries.push_back(ArrayXd::Constant(3, 3.0));
  ctx.finalized = 2;
  CHECK((context_summary(ctx, 3) == 2.0).all());
}

TEST_CASE("a zeroed network scores the dimension on centered data") {
  // with v = 0 and z0 = 0 the objective is E || z1 ||^2 = dim
  LearnedPrior lp = make_learned_prior(4, 6, 9);
  lp.params.setZero();
  std::vector<CfmItem> batch;
  for (int i = 0; i < 2000; ++i) {
    CfmItem item;
    item.chunk = make_chunk_at(1, 0.0, ArrayXd::Zero(4));
    batch.push_back(std::move(item));
  }
  NoiseStream s("loss", 6);
  const double loss = cfm_loss(lp, batch, s);
  CHECK(loss > 0.0);
  CHECK(std::abs(loss - 4.0) < 0.4);
}

TEST_CASE("the analytic field beats any constant bias, pairwise") {
  // Same draws for both candidates; the conditional-expectation field
  // minimizes the objective, so the biased copy must score worse.
  GaussARPrior p = make_gauss_prior(0.0, 1.0, 0.0);
  BumpedGauss bumped{p, 0.3};
  int wins = 0;
  for (int seed = 0; seed < 20; ++seed) {
    NoiseStream gen("data", std::uint64_t(seed));
    std::vector<CfmItem> batch;
    for (int i = 0; i < 200; ++i) {
      CfmItem item;
      item.chunk = make_chunk_at(1, 0.0, gen.normal_array(2));
      batch.push_back(std::move(item));
    }
    NoiseStream sa("pair", std::uint64_t(seed) + 500);
    NoiseStream sb("pair", std::uint64_t(seed) + 500);
    const double la = cfm_loss(p, batch, sa);
    const double lb = cfm_loss(bumped, batch, sb);
    if (la < lb) ++wins;
  }
  CHECK(wins >= 16);
}

TEST_CASE("analytic network gradient agrees with central differences") {
  LearnedPrior lp = make_learned_prior(3, 5, 11);
  NoiseStream gen("batch", 12);
  std::vector<CfmItem> items;
  for (int i = 0; i < 10; ++i) {
    CfmItem item;
    item.chunk = make_chunk_at(2, 0.0, gen.normal_array(3));
    item.ctx = ctx_with(gen.normal_array(3), 1);
    items.push_back(std::move(item));
  }
  NoiseStream fz("freeze", 13);
  FixedCfmBatch fb = freeze_cfm_batch(items, fz);
  const VecXd g = cfm_gradient(lp, fb);
  REQUIRE(g.size() == lp.param_count());

  const double h = 1e-5;
  for (std::int64_t i = 0; i < g.size(); ++i) {
    LearnedPrior plus = lp, minus = lp;
    plus.params[i] += h;
    minus.params[i] -= h;
    const double fd =
        (cfm_loss_fixed(plus, fb) - cfm_loss_fixed(minus, fb)) / (2.0 * h);
    CHECK(std::abs(fd - g[i]) / (std::abs(g[i]) + 1e-6) < 1e-4);
  }
}

TEST_CASE("gradient descent lowers the frozen objective") {
  LearnedPrior lp = make_learned_prior(4, 8, 21);
  NoiseStream gen("train-data", 22);
  std::vector<CfmItem> data;
  for (int i = 0; i < 50; ++i) {
    CfmItem item;
    item.chunk = make_chunk_at(1, 0.0,
                               ArrayXd::Constant(4, 0.5 + 0.1 * gen.normal()));
    data.push_back(std::move(item));
  }
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 3e-3;
  cfg.seed = 1;
  LearnedPrior trained = lp;
  auto history = train(trained, data, cfg);
  REQUIRE(history.size() == 201);
  CHECK(history.back() < history.front());
  CHECK((trained.params - lp.params).norm() > 0.0);
}

TEST_CASE("a zero learning rate leaves the parameters untouched") {
  LearnedPrior lp = make_learned_prior(3, 4, 30);
  const VecXd before = lp.params;
  std::vector<CfmItem> data;
  CfmItem item;
  item.chunk = make_chunk_at(1, 0.0, ArrayXd::Zero(3));
  data.push_back(std::move(item));
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 0.0;
  auto history = train(lp, data, cfg);
  CHECK((lp.params.array() == before.array()).all());
  for (double v : history) CHECK(v == history.front());
}

TEST_CASE("training transfers to held-out draws from the same law") {
  NoiseStream gen("tx", 40);
  auto draw_items = [&gen](int count) {
    std::vector<CfmItem> out;
    for (int i = 0; i < count; ++i) {
      CfmItem item;
      item.chunk = make_chunk_at(
          1, 0.0, ArrayXd::Constant(4, 0.5 + 0.1 * gen.normal()));
      out.push_back(std::move(item));
    }
    return out;
  };
  std::vector<CfmItem> train_set = draw_items(50);
  std::vector<CfmItem> held_out = draw_items(40);

  LearnedPrior lp = make_learned_prior(4, 8, 41);
  LearnedPrior trained = lp;
  TrainConfig cfg;
  cfg.epochs = 400;
  cfg.learning_rate = 3e-3;
  cfg.seed = 2;
  train(trained, train_set, cfg);

  NoiseStream ea("eval", 42);
  NoiseStream eb("eval", 42);
  const double untrained_loss = cfm_loss(lp, held_out, ea);
  const double trained_loss = cfm_loss(trained, held_out, eb);
  CHECK(trained_loss < untrained_loss);
}

TEST_CASE("an absurd learning rate is reported as divergence") {
  LearnedPrior lp = make_learned_prior(3, 4, 50);
  NoiseStream gen("div", 51);
  std::vector<CfmItem> data;
  for (int i = 0; i < 4; ++i) {
    CfmItem item;
    item.chunk = make_chunk_at(1, 0.0, gen.normal_array(3));
    data.push_back(std::move(item));
  }
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 1e12;
  CHECK_THROWS_AS(train(lp, data, cfg), DivergenceError);
}
