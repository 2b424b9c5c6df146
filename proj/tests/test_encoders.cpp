#include <doctest.h>

#include <random>

#include "mpdf/encoders.hpp"

using namespace mpdf;
using Matd = ad::Mat<double>;

namespace {

Matd random_mat(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = dist(rng);
  return m;
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.f = 8;
  cfg.groupnorm_groups = 4;
  cfg.D_v = 6;
  cfg.B = 10;
  cfg.r = 4;
  cfg.T_v = 12;
  cfg.encoder_hidden = 16;
  return cfg;
}

}  // namespace

TEST_SUITE("encoders") {

TEST_CASE("visual encoder shape and frame-wise purity") {
  ModelConfig cfg;  // defaults: T_v=64, D_v=48, f=32
  nn::ParamStore<double> ps(1);
  enc::VisualEncoder<double> ve(ps, cfg);
  std::mt19937_64 rng(2);
  Matd x = random_mat(rng, 64, 48);

  ad::Tape<double> t;
  auto* y = ve(t, t.leaf(x));
  CHECK(y->val.rows() == 64);
  CHECK(y->val.cols() == 32);

  // perturb row 5 only -> rows != 5 bit-identical
  Matd xp = x;
  xp.row(5).array() += 0.5;
  auto* yp = ve(t, t.leaf(xp));
  for (int i = 0; i < 64; ++i) {
    if (i == 5) {
      CHECK(y->val.row(i) != yp->val.row(i));
    } else {
      CHECK(y->val.row(i) == yp->val.row(i));
    }
  }
}

TEST_CASE("zero input rows map to one shared bias-pathway value") {
  ModelConfig cfg = small_config();
  nn::ParamStore<double> ps(3);
  enc::VisualEncoder<double> ve(ps, cfg);
  std::mt19937_64 rng(4);
  Matd x = random_mat(rng, 8, cfg.D_v);
  x.row(2).setZero();
  x.row(6).setZero();
  ad::Tape<double> t;
  auto* y = ve(t, t.leaf(x));
  CHECK(y->val.row(2) == y->val.row(6));
}

TEST_CASE("visual encoder rejects wrong width and non-finite input") {
  ModelConfig cfg = small_config();
  nn::ParamStore<double> ps(5);
  enc::VisualEncoder<double> ve(ps, cfg);
  ad::Tape<double> t;
  CHECK_THROWS_AS(ve(t, t.leaf(Matd::Zero(4, cfg.D_v + 1))), std::invalid_argument);
  Matd bad = Matd::Zero(4, cfg.D_v);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ve(t, t.leaf(bad)), std::invalid_argument);
}

TEST_CASE("audio encoder locality over frame groups") {
  ModelConfig cfg;  // r = 4, B = 64, f = 32
  nn::ParamStore<double> ps(6);
  enc::AudioEncoder<double> ae(ps, cfg);
  std::mt19937_64 rng(7);
  Matd x = random_mat(rng, 256, 64);

  ad::Tape<double> t;
  auto* y = ae(t, t.leaf(x));
  CHECK(y->val.rows() == 64);
  CHECK(y->val.cols() == 32);

  // perturb audio step 9 -> only visual frame 2 changes (9 / 4 == 2)
  Matd xp = x;
  xp.row(9).array() += 0.25;
  auto* yp = ae(t, t.leaf(xp));
  for (int i = 0; i < 64; ++i) {
    if (i == 2) {
      CHECK(y->val.row(i) != yp->val.row(i));
    } else {
      CHECK(y->val.row(i) == yp->val.row(i));
    }
  }
}

TEST_CASE("identical steps in a group pool to the per-step encoding") {
  ModelConfig cfg = small_config();
  nn::ParamStore<double> ps(8);
  enc::AudioEncoder<double> ae(ps, cfg);
  std::mt19937_64 rng(9);
  Matd step = random_mat(rng, 1, cfg.B);
  Matd x(cfg.r * 3, cfg.B);
  for (int i = 0; i < x.rows(); ++i) x.row(i) = step;

  ad::Tape<double> t;
  auto* pooled = ae(t, t.leaf(x));
  // reference path: encode the single step, skip the (now trivial) pooling
  auto* h = ad::relu(t, ae.fc1(t, t.leaf(step)));
  auto* ref = ae.proj(t, h);
  for (int i = 0; i < pooled->val.rows(); ++i)
    CHECK((pooled->val.row(i) - ref->val.row(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("audio encoder rejects T_a not divisible by r") {
  ModelConfig cfg = small_config();
  nn::ParamStore<double> ps(10);
  enc::AudioEncoder<double> ae(ps, cfg);
  ad::Tape<double> t;
  CHECK_THROWS_AS(ae(t, t.leaf(Matd::Zero(cfg.r * 3 + 1, cfg.B))), std::invalid_argument);
}

TEST_CASE("fusion degenerate stack weights") {
  ModelConfig cfg = small_config();
  nn::ParamStore<double> ps(11);
  enc::CrossModalFusion<double> fuse(ps, cfg);
  std::mt19937_64 rng(12);
  Matd v = random_mat(rng, 10, cfg.f), a = random_mat(rng, 10, cfg.f);

  ad::Tape<double> t;
  auto* vl = t.leaf(v);
  auto* al = t.leaf(a);
  auto* cprime = ad::concat_cols(t, {vl, al});
  auto* m = fuse.mix(t, cprime);

  fuse.stack_w->value << 1.0, 0.0;
  fuse.stack_b->value(0, 0) = 0.0;
  auto* c1 = fuse(t, vl, al);
  CHECK((c1->val - m->val).cwiseAbs().maxCoeff() == 0.0);

  fuse.stack_w->value << 0.0, 1.0;
  auto* c2 = fuse(t, vl, al);
  CHECK((c2->val - cprime->val).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fusion is per-frame and scales linearly with zero biases") {
  ModelConfig cfg = small_config();
  nn::ParamStore<double> ps(13);
  enc::CrossModalFusion<double> fuse(ps, cfg);
  std::mt19937_64 rng(14);
  Matd v = random_mat(rng, 10, cfg.f), a = random_mat(rng, 10, cfg.f);

  ad::Tape<double> t;
  auto* base = fuse(t, t.leaf(v), t.leaf(a));
  CHECK(base->val.rows() == 10);
  CHECK(base->val.cols() == 2 * cfg.f);

  Matd vp = v;
  vp.row(3).array() -= 1.5;
  auto* per = fuse(t, t.leaf(vp), t.leaf(a));
  for (int i = 0; i < 10; ++i) {
    if (i == 3) {
      CHECK(base->val.row(i) != per->val.row(i));
    } else {
      CHECK(base->val.row(i) == per->val.row(i));
    }
  }

  fuse.mix.b->value.setZero();
  fuse.stack_b->value.setZero();
  double alpha = 2.5;
  auto* unit = fuse(t, t.leaf(v), t.leaf(a));
  auto* scaled = fuse(t, t.leaf(Matd(alpha * v)), t.leaf(Matd(alpha * a)));
  CHECK((scaled->val - alpha * unit->val).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(fuse(t, t.leaf(v), t.leaf(Matd::Zero(9, cfg.f))), std::invalid_argument);
}

}  // TEST_SUITE
