#include <cmath>
#include <random>

#include "astfocus/autodiff.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace astfocus;
using namespace astfocus::autodiff;
using astfocus::testing::error_code;

TEST_SUITE("autodiff") {

TEST_CASE("softmax of zeros is uniform") {
  Tape t;
  const NodeId out = t.softmax(t.constant(Matrix(3, 1, 0.0)));
  const Matrix& v = forward(t, {}, out);
  for (int i = 0; i < 3; ++i) CHECK(v[static_cast<std::size_t>(i)] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("sigmoid of zero is one half") {
  Tape t;
  CHECK(forward(t, {}, t.sigmoid(t.constant(Matrix::scalar(0.0)))).item() == 0.5);
}

TEST_CASE("identity matmul returns its input") {
  Tape t;
  const NodeId v = t.input("v", 4, 1);
  const NodeId out = t.matmul(t.constant(Matrix::identity(4)), v);
  const Matrix input = Matrix::column({0.3, -1.2, 7.0, 2.5});
  const Matrix& r = forward(t, {{"v", input}}, out);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r[i] == input[i]);
}

TEST_CASE("gradient of a sum is all ones") {
  Tape t;
  const NodeId p = t.parameter("p", 3, 2);
  const NodeId out = t.sum(p);
  forward(t, {{"p", Matrix(3, 2, 0.7)}}, out);
  const Gradients g = backward(t, out);
  for (double v : g.at("p").data()) CHECK(v == 1.0);
}

TEST_CASE("gradient of mean of squares is 2p/k") {
  Tape t;
  const NodeId p = t.parameter("p", 4, 1);
  const NodeId out = t.mean(t.mul(p, p));
  const Matrix value = Matrix::column({1.0, -2.0, 0.5, 3.0});
  forward(t, {{"p", value}}, out);
  const Gradients g = backward(t, out);
  for (std::size_t i = 0; i < 4; ++i) CHECK(g.at("p")[i] == doctest::Approx(2.0 * value[i] / 4.0));
}

TEST_CASE("unused parameters get zero gradients") {
  Tape t;
  const NodeId a = t.parameter("a", 2, 1);
  t.parameter("b", 3, 1);
  const NodeId out = t.sum(a);
  forward(t, {{"a", Matrix(2, 1, 1.0)}, {"b", Matrix(3, 1, 1.0)}}, out);
  const Gradients g = backward(t, out);
  REQUIRE(g.contains("b"));
  for (double v : g.at("b").data()) CHECK(v == 0.0);
}

TEST_CASE("shape and binding errors") {
  Tape t;
  const NodeId a = t.input("a", 2, 3);
  const NodeId b = t.input("b", 2, 3);
  CHECK(error_code([&] { t.matmul(a, b); }) == ErrorCode::kShapeMismatch);
  const NodeId s = t.add(a, b);
  CHECK(error_code([&] { forward(t, {{"a", Matrix(2, 3)}}, s); }) == ErrorCode::kUnboundInput);
  CHECK(error_code([&] { forward(t, {{"a", Matrix(2, 3)}, {"b", Matrix(3, 2)}}, s); }) ==
        ErrorCode::kShapeMismatch);
  forward(t, {{"a", Matrix(2, 3)}, {"b", Matrix(2, 3)}}, s);
  CHECK(error_code([&] { backward(t, s); }) == ErrorCode::kNonScalarOutput);
}

TEST_CASE("log is clamped below and flat under the clamp") {
  Tape t;
  const NodeId p = t.parameter("p", 1, 1);
  const NodeId out = t.log(p);
  CHECK(forward(t, {{"p", Matrix::scalar(0.0)}}, out).item() == std::log(kLogFloor));
  CHECK(backward(t, out).at("p").item() == 0.0);
}

TEST_CASE("finite differences on a linear graph are exact up to roundoff") {
  Tape t;
  const NodeId w = t.parameter("w", 3, 3);
  const NodeId x = t.parameter("x", 3, 1);
  const NodeId out = t.sum(t.add(t.matmul(w, t.constant(Matrix::column({1.0, -2.0, 0.5}))), x));
  const Bindings b{{"w", Matrix(3, 3, {0.1, 0.2, 0.3, -0.4, 0.5, 0.6, 0.7, -0.8, 0.9})},
                   {"x", Matrix::column({0.2, 0.1, -0.3})}};
  CHECK(finite_diff_check(t, b, out, 1e-5) < 1e-8);
}

TEST_CASE("sigmoid chain of depth four passes the finite-difference check") {
  Tape t;
  const NodeId p = t.parameter("p", 3, 1);
  NodeId n = p;
  for (int i = 0; i < 4; ++i) n = t.sigmoid(t.add(n, n));
  const NodeId out = t.sum(n);
  CHECK(finite_diff_check(t, {{"p", Matrix::column({0.3, -0.7, 1.1})}}, out, 1e-5) < 1e-5);
}

TEST_CASE("constant output has zero error") {
  Tape t;
  t.parameter("p", 2, 1);
  const NodeId out = t.sum(t.constant(Matrix(2, 1, 3.0)));
  CHECK(finite_diff_check(t, {{"p", Matrix(2, 1, 1.0)}}, out, 1e-5) == 0.0);
}

TEST_CASE("random graphs match central differences") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto g = astfocus::testing::random_graph(seed);
    worst = std::max(worst, finite_diff_check(g->tape, g->bindings, g->output, 1e-5));
  }
  CHECK(worst < 1e-5);
}

}  // TEST_SUITE
