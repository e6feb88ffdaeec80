#include <cmath>
#include <limits>

#include "doctest.h"
#include "tabvfl/errors.hpp"
#include "tabvfl/nn/matrix.hpp"

using tabvfl::nn::Matrix;

TEST_CASE("matmul variants agree with explicit transposes") {
  Matrix a = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  Matrix b = Matrix::from_rows({{1, 0}, {0, 1}, {2, -1}});
  Matrix ab = tabvfl::nn::matmul(a, b);
  CHECK(ab == Matrix::from_rows({{7, -1}, {16, -1}}));
  CHECK(tabvfl::nn::matmul_tn(tabvfl::nn::transpose(a), b) == ab);
  CHECK(tabvfl::nn::matmul_nt(a, tabvfl::nn::transpose(b)) == ab);
  CHECK_THROWS_AS(tabvfl::nn::matmul(a, a), tabvfl::ShapeError);
}

TEST_CASE("column slicing and concatenation are inverse") {
  Matrix m = Matrix::from_rows({{1, 2, 3, 4}, {5, 6, 7, 8}});
  std::vector<Matrix> parts{tabvfl::nn::slice_cols(m, 0, 1), tabvfl::nn::slice_cols(m, 1, 4)};
  CHECK(tabvfl::nn::hconcat(parts) == m);
  std::vector<Matrix> rows{tabvfl::nn::slice_rows(m, 0, 1), tabvfl::nn::slice_rows(m, 1, 2)};
  CHECK(tabvfl::nn::vconcat(rows) == m);
  CHECK_THROWS_AS(tabvfl::nn::slice_cols(m, 2, 5), tabvfl::ShapeError);
}

TEST_CASE("non-finite entries are surfaced as errors") {
  Matrix m(2, 2, 1.0);
  CHECK_NOTHROW(tabvfl::nn::require_finite(m, "m"));
  m(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(tabvfl::nn::require_finite(m, "m"), tabvfl::NumericError);
  m(1, 0) = INFINITY;
  CHECK_THROWS_AS(tabvfl::nn::require_finite(m, "m"), tabvfl::NumericError);
}

TEST_CASE("data length must match the shape") {
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), tabvfl::ShapeError);
}
