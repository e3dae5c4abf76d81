#include <doctest.h>

#include <cmath>

#include "protomoco/tensor.hpp"

using protomoco::ContractError;
using protomoco::DimensionError;
using Tensorf = protomoco::Tensor<float>;

TEST_CASE("construction and row-major layout") {
  Tensorf t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rank() == 2);
  CHECK(t.size() == 6);
  CHECK(t.at(0, 2) == 3.0f);
  CHECK(t.at(1, 0) == 4.0f);

  Tensorf c({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(c.at(1, 0, 1) == 6.0f);
  CHECK(c.at(0, 1, 0) == 3.0f);
}

TEST_CASE("shape validation") {
  CHECK_THROWS_AS(Tensorf({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensorf({-1}), DimensionError);
  CHECK_THROWS_AS(Tensorf(std::vector<int>{}), DimensionError);
  CHECK_THROWS_AS(Tensorf({2, 2}, {1, 2, 3}), DimensionError);
}

TEST_CASE("full, scalar and item") {
  auto t = Tensorf::full({3}, 2.5f);
  CHECK(t[0] == 2.5f);
  CHECK(t[2] == 2.5f);
  auto s = Tensorf::scalar(7.0f);
  CHECK(s.item() == 7.0f);
  CHECK_THROWS_AS(t.item(), ContractError);
}

TEST_CASE("all_finite flags NaN and Inf") {
  Tensorf t({2}, {1.0f, 2.0f});
  CHECK(t.all_finite());
  t[1] = std::nanf("");
  CHECK_FALSE(t.all_finite());
  t[1] = INFINITY;
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("shape_string names extents") {
  Tensorf t({4, 5});
  CHECK(t.shape_string() == "[4x5]");
}
