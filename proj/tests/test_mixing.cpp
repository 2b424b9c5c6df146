#include <doctest.h>

#include <random>

#include "mpdf/mixing.hpp"

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
  cfg.L = 3;
  return cfg;
}

}  // namespace

TEST_SUITE("mixing") {

TEST_CASE("L levels out, each T x 2f") {
  ModelConfig cfg = small_config();
  nn::ParamStore<double> ps(1);
  mix::FeatureMixing<double> mixer(ps, cfg);
  std::mt19937_64 rng(2);
  int T = 10;
  Matd c = random_mat(rng, T, 2 * cfg.f), a = random_mat(rng, T, cfg.f),
       v = random_mat(rng, T, cfg.f);
  ad::Tape<double> t;
  auto levels = mixer(t, t.leaf(c), t.leaf(a), t.leaf(v));
  CHECK(levels.size() == 3);
  for (auto* z : levels) {
    CHECK(z->val.rows() == T);
    CHECK(z->val.cols() == 2 * cfg.f);
    CHECK(z->val.allFinite());
  }
}

TEST_CASE("A == V makes the two memories identical: swapping arguments is a no-op") {
  ModelConfig cfg = small_config();
  nn::ParamStore<double> ps(3);
  mix::FeatureMixing<double> mixer(ps, cfg);
  std::mt19937_64 rng(4);
  int T = 8;
  Matd c = random_mat(rng, T, 2 * cfg.f), av = random_mat(rng, T, cfg.f);
  ad::Tape<double> t;
  auto l1 = mixer(t, t.leaf(c), t.leaf(av), t.leaf(av));
  auto l2 = mixer(t, t.leaf(c), t.leaf(av), t.leaf(av));
  for (int l = 0; l < 3; ++l) CHECK(l1[size_t(l)]->val == l2[size_t(l)]->val);
}

TEST_CASE("zeroed memories reduce each level to the query-only path") {
  ModelConfig cfg = small_config();
  cfg.L = 2;
  nn::ParamStore<double> ps(5);
  mix::FeatureMixing<double> mixer(ps, cfg);
  // zero the cross-attention value/key/output biases so a zero memory
  // contributes exactly nothing
  for (int l = 0; l < cfg.L; ++l) {
    for (auto* layer : {&mixer.dec_va[size_t(l)], &mixer.dec_av[size_t(l)]}) {
      layer->cross_attn.wk.b->value.setZero();
      layer->cross_attn.wv.b->value.setZero();
      layer->cross_attn.wo.b->value.setZero();
    }
  }
  std::mt19937_64 rng(6);
  int T = 9;
  Matd c = random_mat(rng, T, 2 * cfg.f);
  Matd zeros = Matd::Zero(T, cfg.f);

  ad::Tape<double> t;
  auto got = mixer(t, t.leaf(c), t.leaf(zeros), t.leaf(zeros));

  // reduced computation: the same layers with the cross path skipped
  ad::Var<double> z = t.leaf(c);
  std::vector<ad::Var<double>> expect;
  for (int l = 0; l < cfg.L; ++l) {
    auto* zp = mixer.dec_va[size_t(l)](t, z, nullptr, nullptr, nullptr, nullptr, true);
    z = mixer.dec_av[size_t(l)](t, zp, nullptr, nullptr, nullptr, nullptr, true);
    expect.push_back(z);
  }
  for (int l = 0; l < cfg.L; ++l)
    CHECK((got[size_t(l)]->val - expect[size_t(l)]->val).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradients reach A, V and C (finite-difference spot check)") {
  ModelConfig cfg = small_config();
  cfg.L = 2;
  nn::ParamStore<double> ps(7);
  mix::FeatureMixing<double> mixer(ps, cfg);
  std::mt19937_64 rng(8);
  int T = 6;
  Matd c0 = random_mat(rng, T, 2 * cfg.f), a0 = random_mat(rng, T, cfg.f),
       v0 = random_mat(rng, T, cfg.f);

  auto readout = [&](const Matd& cv, const Matd& av, const Matd& vv, bool backward,
                     Matd* gc, Matd* ga, Matd* gv) {
    ad::Tape<double> t;
    auto* c = t.leaf(cv, backward);
    auto* a = t.leaf(av, backward);
    auto* v = t.leaf(vv, backward);
    auto levels = mixer(t, c, a, v);
    auto* loss = ad::mean_all(t, ad::mul(t, levels.back(), levels.back()));
    if (backward) {
      t.backward(loss);
      *gc = c->grad;
      *ga = a->grad;
      *gv = v->grad;
    }
    return loss->val(0, 0);
  };
  Matd gc, ga, gv;
  readout(c0, a0, v0, true, &gc, &ga, &gv);
  CHECK(gc.cwiseAbs().maxCoeff() > 0);
  CHECK(ga.cwiseAbs().maxCoeff() > 0);
  CHECK(gv.cwiseAbs().maxCoeff() > 0);

  // spot-check a few coordinates of each input against central differences
  double eps = 1e-5;
  std::vector<std::tuple<char, int, int>> coords = {
      {'c', 1, 3}, {'c', 4, 10}, {'a', 0, 2}, {'a', 5, 7}, {'v', 2, 1}, {'v', 3, 6}};
  for (auto [which, i, j] : coords) {
    Matd cu = c0, cd = c0, au = a0, ad_ = a0, vu = v0, vd = v0;
    double analytic = 0;
    if (which == 'c') {
      cu(i, j) += eps;
      cd(i, j) -= eps;
      analytic = gc(i, j);
    } else if (which == 'a') {
      au(i, j) += eps;
      ad_(i, j) -= eps;
      analytic = ga(i, j);
    } else {
      vu(i, j) += eps;
      vd(i, j) -= eps;
      analytic = gv(i, j);
    }
    double up = readout(cu, au, vu, false, nullptr, nullptr, nullptr);
    double down = readout(cd, ad_, vd, false, nullptr, nullptr, nullptr);
    double num = (up - down) / (2 * eps);
    CHECK(std::abs(num - analytic) / std::max({1e-6, std::abs(num), std::abs(analytic)}) < 1e-4);
  }
}

TEST_CASE("shape and construction errors") {
  ModelConfig cfg = small_config();
  cfg.L = 0;
  nn::ParamStore<double> ps(9);
  CHECK_THROWS_AS(mix::FeatureMixing<double>(ps, cfg), std::invalid_argument);

  cfg.L = 1;
  nn::ParamStore<double> ps2(10);
  mix::FeatureMixing<double> mixer(ps2, cfg);
  ad::Tape<double> t;
  std::mt19937_64 rng(11);
  Matd c = random_mat(rng, 6, 2 * cfg.f), a = random_mat(rng, 6, cfg.f),
       v = random_mat(rng, 5, cfg.f);
  CHECK_THROWS_AS(mixer(t, t.leaf(c), t.leaf(a), t.leaf(v)), std::invalid_argument);
}

}  // TEST_SUITE
