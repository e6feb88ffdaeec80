#include <cmath>

#include "doctest.h"
#include "tabvfl/nn/optim.hpp"

using namespace tabvfl::nn;

TEST_CASE("adam_step") {
  SUBCASE("zero gradients leave parameters unchanged") {
    Parameter p("p", Matrix::from_rows({{1.5, -2.0}}));
    Adam adam({&p});
    adam.step();
    CHECK(p.value == Matrix::from_rows({{1.5, -2.0}}));
    CHECK(adam.steps_taken() == 1);
  }
  SUBCASE("first step with unit gradient moves by -lr") {
    Parameter p("p", Matrix::from_rows({{0.0}}));
    Adam adam({&p}, AdamConfig{0.1, 0.9, 0.999, 1e-8});
    p.grad(0, 0) = 1.0;
    adam.step();
    // m̂ = v̂ = 1 after bias correction → Δ = −0.1 / (1 + 1e-8)
    CHECK(p.value(0, 0) == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-14));
  }
  SUBCASE("parameters update independently") {
    Parameter a("a", Matrix(1, 1));
    Parameter b("b", Matrix(1, 1));
    Adam adam({&a, &b});
    a.grad(0, 0) = 3.0;
    adam.step();
    CHECK(a.value(0, 0) != 0.0);
    CHECK(b.value(0, 0) == 0.0);
    adam.zero_grad();
    CHECK(a.grad(0, 0) == 0.0);
  }
}

TEST_CASE("grad_check") {
  SUBCASE("x^2 at 1") {
    Matrix x = Matrix::from_rows({{1.0}});
    auto f = [](const Matrix& m) { return m(0, 0) * m(0, 0); };
    auto r = grad_check(f, x, Matrix::from_rows({{2.0}}), 1e-6);
    CHECK(r.max_rel_error < 1e-6);
  }
  SUBCASE("a wrong gradient is reported") {
    Matrix x = Matrix::from_rows({{1.0, 2.0}});
    auto f = [](const Matrix& m) { return m(0, 0) * m(0, 1); };
    auto r = grad_check(f, x, Matrix::from_rows({{2.0, 5.0}}), 1e-6);
    CHECK(r.max_rel_error > 0.5);
    CHECK(r.worst_index == 1);
  }
  SUBCASE("non-finite function is an error") {
    Matrix x = Matrix::from_rows({{0.0}});
    auto f = [](const Matrix& m) { return std::log(m(0, 0)); };
    CHECK_THROWS(grad_check(f, x, Matrix(1, 1), 1e-6));
  }
}
