#include <doctest.h>

#include <random>

#include "mpdf/nn.hpp"

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

// FD gradient of a scalar readout w.r.t. the layer input.
template <typename Fwd>
double input_grad_error(const Matd& x0, const Fwd& fwd, double eps = 1e-6) {
  ad::Tape<double> tape;
  auto* x = tape.leaf(x0, true);
  auto* y = fwd(tape, x);
  auto* loss = ad::sum_all(tape, ad::mul(tape, y, y));
  tape.backward(loss);
  Matd analytic = x->grad;

  double dev = 0, scale = 1e-6;
  for (int i = 0; i < x0.rows(); ++i)
    for (int j = 0; j < x0.cols(); ++j) {
      auto eval = [&](double delta) {
        Matd xp = x0;
        xp(i, j) += delta;
        ad::Tape<double> t2;
        auto* v = t2.leaf(xp, false);
        auto* yy = fwd(t2, v);
        return ad::sum_all(t2, ad::mul(t2, yy, yy))->val(0, 0);
      };
      double num = (eval(eps) - eval(-eps)) / (2 * eps);
      dev = std::max(dev, std::abs(num - analytic(i, j)));
      scale = std::max({scale, std::abs(num), std::abs(analytic(i, j))});
    }
  return dev / scale;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("linear layer shapes and gradient") {
  nn::ParamStore<double> ps(1);
  nn::Linear<double> lin(ps, "lin", 6, 4);
  std::mt19937_64 rng(2);
  Matd x0 = random_mat(rng, 5, 6);
  CHECK(input_grad_error(x0, [&](auto& t, auto* x) { return lin(t, x); }) < 1e-6);
}

TEST_CASE("multi-head attention gradient and probe") {
  nn::ParamStore<double> ps(3);
  nn::MultiHeadAttention<double> attn(ps, "attn", 8, 4);
  std::mt19937_64 rng(4);
  Matd x0 = random_mat(rng, 6, 8);
  CHECK(input_grad_error(x0, [&](auto& t, auto* x) {
          return attn(t, x, x, nullptr);
        }) < 1e-6);

  Matd mask = ad::causal_mask<double>(6);
  nn::AttnProbe<double> probe;
  ad::Tape<double> tape;
  auto* x = tape.leaf(x0, false);
  attn(tape, x, x, &mask, &probe);
  CHECK(probe.weights.size() == 4);  // one per head
  for (const auto& w : probe.weights)
    for (int i = 0; i < w.rows(); ++i)
      for (int j = i + 1; j < w.cols(); ++j) CHECK(w(i, j) == 0.0);
}

TEST_CASE("attention rejects dims not divisible by heads") {
  nn::ParamStore<double> ps(5);
  CHECK_THROWS_AS(nn::MultiHeadAttention<double>(ps, "bad", 6, 4), std::invalid_argument);
}

TEST_CASE("encoder and decoder layers backprop correctly") {
  nn::ParamStore<double> ps(6);
  nn::TransformerEncoderLayer<double> enc(ps, "enc", 8, 4, 16);
  nn::TransformerDecoderLayer<double> dec(ps, "dec", 8, 4, 16);
  std::mt19937_64 rng(7);
  Matd x0 = random_mat(rng, 5, 8);
  Matd mem = random_mat(rng, 5, 8);
  CHECK(input_grad_error(x0, [&](auto& t, auto* x) { return enc(t, x, nullptr); }) < 1e-6);
  CHECK(input_grad_error(x0, [&](auto& t, auto* x) {
          auto* m = t.leaf(mem, false);
          return dec(t, x, m, nullptr, nullptr);
        }) < 1e-6);
}

TEST_CASE("parameter gradients flow through layers") {
  nn::ParamStore<double> ps(8);
  nn::TransformerEncoderLayer<double> enc(ps, "enc", 8, 4, 16);
  std::mt19937_64 rng(9);
  Matd x0 = random_mat(rng, 4, 8);
  ad::Tape<double> tape;
  auto* y = enc(tape, tape.leaf(x0, false), nullptr);
  tape.backward(ad::sum_all(tape, ad::mul(tape, y, y)));
  int with_grad = 0;
  for (auto* p : ps.all())
    if (p->grad.cwiseAbs().maxCoeff() > 0) ++with_grad;
  CHECK(with_grad == int(ps.size()));  // every parameter participates
}

TEST_CASE("sinusoidal position encoding basics") {
  auto pe = nn::sinusoidal_position_encoding<double>(16, 8);
  CHECK(pe.rows() == 16);
  CHECK(pe.cols() == 8);
  CHECK(pe(0, 0) == 0.0);                    // sin(0)
  CHECK(pe(0, 1) == 1.0);                    // cos(0)
  CHECK(pe.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(pe.row(3) != pe.row(4));             // distinct positions
}

TEST_CASE("param store init kinds and determinism") {
  nn::ParamStore<double> a(42), b(42);
  auto& wa = a.create("w", 4, 4, nn::Init::Xavier);
  auto& wb = b.create("w", 4, 4, nn::Init::Xavier);
  CHECK(wa.value == wb.value);  // same seed, same draw
  auto& ones = a.create("g", 1, 4, nn::Init::One);
  CHECK(ones.value.sum() == 4.0);
  auto& zeros = a.create("z", 1, 4, nn::Init::Zero);
  CHECK(zeros.value.cwiseAbs().sum() == 0.0);
}

}  // TEST_SUITE
