#include "glip/losses.hpp"
#include "glip/util.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

using namespace glip;

namespace {

Batch random_batch(const BatchShape& s, Rng& rng, double lo, double hi) {
  Batch b = Batch::zeros(s);
  for (auto& v : b.values) v = rng.uniform(lo, hi);
  return b;
}

LossSpec spec_of(LossKind kind, bool gp = false) {
  LossSpec s;
  s.kind = kind;
  s.add_grid_penalty = gp;
  s.lambda = 0.7;
  return s;
}

}  // namespace

TEST_CASE("loss names parse") {
  for (auto k : {LossKind::Glip, LossKind::OtOnly, LossKind::Wce, LossKind::Focal, LossKind::Mse, LossKind::L1,
                 LossKind::SmoothL1})
    CHECK(parse_loss_kind(to_string(k)) == k);
  CHECK(parse_loss_kind("ot") == LossKind::OtOnly);
  CHECK(parse_loss_kind("fl") == LossKind::Focal);
  CHECK_THROWS_AS(parse_loss_kind("hinge"), std::invalid_argument);
  CHECK(spec_of(LossKind::Mse, true).label() == "MSE+GP");
}

TEST_CASE("loss spec validation") {
  LossSpec s;
  s.lambda = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = spec_of(LossKind::Glip, true);
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK_THROWS_AS(with_grid_penalty(spec_of(LossKind::Glip)), std::invalid_argument);
  CHECK_NOTHROW(spec_of(LossKind::Mse, true).validate());
}

TEST_CASE("ot loss matches the scalar oracle") {
  Rng rng(3);
  const BatchShape s{3, 2, {3, 4, 5}};
  for (int t = 0; t < 5; ++t) {
    const Batch f = random_batch(s, rng, -3, 3), h = random_batch(s, rng, 0, 1);
    CHECK(ot_loss(f, h).value == doctest::Approx(oracle::ot_loss(f.values, h.values, 3, 2, 60)).epsilon(1e-12));
  }
}

TEST_CASE("grid penalty matches the edge-loop oracle") {
  Rng rng(4);
  const BatchShape s{2, 2, {3, 4, 5}};
  const Batch f = random_batch(s, rng, -2, 2);
  for (bool one_sided : {false, true})
    CHECK(grid_lipschitz_penalty(f, one_sided).value ==
          doctest::Approx(oracle::grid_penalty(f.values, 2, 2, 3, 4, 5, one_sided)).epsilon(1e-12));
}

TEST_CASE("ot loss rejects channels without positive or negative mass") {
  const BatchShape s{1, 1, {2, 2, 2}};
  Batch f = Batch::zeros(s), h = Batch::zeros(s);
  CHECK_THROWS_AS(ot_loss(f, h), std::domain_error);
  for (auto& v : h.values) v = 1.0;
  CHECK_THROWS_AS(ot_loss(f, h), std::domain_error);
}

TEST_CASE("analytic gradients match central differences on 3D batches") {
  Rng rng(11);
  const BatchShape s{2, 2, {3, 3, 4}};
  const Batch h = random_batch(s, rng, 0.0, 1.0);
  std::vector<LossSpec> specs;
  for (auto k : {LossKind::Glip, LossKind::OtOnly, LossKind::Wce, LossKind::Focal, LossKind::Mse, LossKind::L1,
                 LossKind::SmoothL1})
    specs.push_back(spec_of(k));
  for (auto k : {LossKind::Wce, LossKind::Focal, LossKind::Mse, LossKind::L1, LossKind::SmoothL1})
    specs.push_back(spec_of(k, true));
  LossSpec one_sided = spec_of(LossKind::Glip);
  one_sided.one_sided_penalty = true;
  specs.push_back(one_sided);

  for (const auto& spec : specs) {
    CAPTURE(spec.label());
    const auto fn = make_loss(spec);
    Batch x = random_batch(s, rng, 0.1, 0.9);
    // Multiply out of [0, 1] for the regression losses so slopes exceed 1.
    if (!is_probability_loss(spec.kind))
      for (auto& v : x.values) v *= 3.0;
    const auto r = oracle::check_gradient(
        [&](const std::vector<double>& v) {
          Batch p{s, v};
          return fn(p, h);
        },
        x.values, 1e-5, 1e-4);
    CHECK(r.ok);
  }
}

TEST_CASE("probability losses clamp and zero the gradient outside the open interval") {
  const BatchShape s{1, 1, {1, 1, 2}};
  Batch p{s, {0.0, 0.5}}, h{s, {1.0, 1.0}};
  for (auto k : {LossKind::Wce, LossKind::Focal}) {
    const auto v = make_loss(spec_of(k))(p, h);
    CHECK(v.clamped == 1);
    CHECK(v.grad[0] == 0.0);
    CHECK(v.grad[1] != 0.0);
    CHECK(std::isfinite(v.value));
  }
}

TEST_CASE("grid penalty subgradient is zero at flat edges") {
  const BatchShape s{1, 1, {1, 1, 2}};
  const Batch f{s, {0.25, 0.25}};
  const auto v = grid_lipschitz_penalty(f);
  CHECK(v.value == 1.0);
  CHECK(v.grad == std::vector<double>{0.0, 0.0});
}

TEST_CASE("identities hold exactly") {
  Rng rng(5);
  const BatchShape s{2, 3, {4, 5, 3}};
  const Batch h = random_batch(s, rng, 0, 1);
  for (double c : {0.0, 1.0, -2.5, 0.3, 17.125}) {
    Batch f = Batch::zeros(s);
    for (auto& v : f.values) v = c;
    CHECK(ot_loss(f, h).value == 0.0);
  }
  Batch ramp = Batch::zeros(s);
  for (int b = 0; b < s.batch; ++b)
    for (int ch = 0; ch < s.channels; ++ch)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j)
          for (int k = 0; k < 3; ++k) ramp.values[ramp.offset(b, ch) + (i * 5 + j) * 3 + k] = i + j + k + 0.5 * ch;
  CHECK(grid_lipschitz_penalty(ramp).value == 0.0);

  const Batch f = random_batch(s, rng, -1, 1);
  LossSpec zero = spec_of(LossKind::Glip);
  zero.lambda = 0.0;
  const auto g = glip_loss(f, h, zero), o = ot_loss(f, h);
  CHECK(g.value == o.value);
  CHECK(g.grad == o.grad);
  for (auto k : {LossKind::Mse, LossKind::L1, LossKind::SmoothL1, LossKind::Wce, LossKind::Focal, LossKind::OtOnly}) {
    LossSpec base = spec_of(k);
    base.lambda = 0.0;
    const Batch p = random_batch(s, rng, 0.05, 0.95);
    const auto a = with_grid_penalty(base)(p, h), b = base_loss(base)(p, h);
    CHECK(a.value == b.value);
    CHECK(a.grad == b.grad);
  }
}

TEST_CASE("stacked heatmaps keep channel-major order per sample") {
  Heatmap a{{{1, 1, 2}, Vec3::Ones(), Vec3::Zero()}, 2, {1, 2, 3, 4}, {}};
  Heatmap b = a;
  b.data = {5, 6, 7, 8};
  const Batch s = stack_heatmaps({a, b});
  CHECK(s.shape == BatchShape{2, 2, {1, 1, 2}});
  CHECK(s.values == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
}
