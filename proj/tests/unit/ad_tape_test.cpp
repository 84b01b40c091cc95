#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "neuralcsa/ad/tape.hpp"

namespace ad = ncsa::ad;

namespace {

template <class F>
std::vector<double> central_difference(F f, std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

template <class T>
T composite(const std::vector<T>& p) {
  const std::vector<T> w = {p[0], p[1]};
  const std::vector<T> in = {p[2], T(0.5)};
  const T lin = ad::affine(std::span<const T>(w), std::span<const T>(in), p[3]);
  T r = ad::exp(lin) / (1.0 + ad::square(p[1])) + ad::log(ad::softplus(p[2]) + 2.0);
  r = r + ad::sqrt(1.0 + p[0] * p[0]) * ad::sigmoid(p[3]) - ad::pow(ad::abs(p[1]) + 1.0, 1.5);
  const std::vector<T> terms = {r, p[0] * 3.0, ad::log1p(p[2] * p[2])};
  return ad::sum(std::span<const T>(terms));
}

}  // namespace

TEST(Tape, ConstantsNeverRecord) {
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const ad::Var a(2.0);
  const ad::Var b(3.0);
  const ad::Var c = a * b + ad::exp(a);
  EXPECT_TRUE(c.is_constant());
  EXPECT_EQ(tape.num_nodes(), 0u);
  EXPECT_DOUBLE_EQ(c.value(), 6.0 + std::exp(2.0));
}

TEST(Tape, GradientMatchesCentralDifferences) {
  const std::vector<double> point = {0.3, -0.7, 1.1, 0.2};
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const std::vector<ad::Var> vars = tape.variables(point);
  const ad::Var out = composite<ad::Var>(vars);
  const std::vector<double> g = tape.gradient(out, vars);
  const std::vector<double> fd = central_difference([](const std::vector<double>& x) { return composite(x); }, point);
  ASSERT_EQ(g.size(), fd.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_LE(std::fabs(g[i] - fd[i]), 1e-4 * std::max(1.0, std::fabs(fd[i]))) << "component " << i;
  }
  EXPECT_DOUBLE_EQ(out.value(), composite(point));
}

TEST(Tape, DetachStopsGradient) {
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const ad::Var x = tape.variable(1.5);
  const ad::Var y = x * ad::detach(x);
  const std::vector<ad::Var> wrt = {x};
  EXPECT_DOUBLE_EQ(tape.gradient(y, wrt)[0], 1.5);
}

TEST(Tape, MaxRoutesGradientToSelectedBranch) {
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const std::vector<ad::Var> xs = tape.variables(std::vector<double>{1.0, 4.0});
  const ad::Var m = ad::max(xs[0] * 2.0, xs[1]);
  const std::vector<double> g = tape.gradient(m, xs);
  EXPECT_DOUBLE_EQ(g[0], 0.0);
  EXPECT_DOUBLE_EQ(g[1], 1.0);
}

TEST(Tape, ClearKeepsTapeReusable) {
  ad::Tape tape;
  ad::TapeScope scope(tape);
  for (int rep = 0; rep < 3; ++rep) {
    tape.clear();
    const ad::Var x = tape.variable(2.0);
    const ad::Var y = x * x * x;
    const std::vector<ad::Var> wrt = {x};
    EXPECT_DOUBLE_EQ(tape.gradient(y, wrt)[0], 12.0);
  }
}

TEST(Tape, OperationWithoutActiveTapeThrows) {
  ad::Var x(1.0, 0);
  EXPECT_THROW((void)(x * 2.0), std::logic_error);
}
