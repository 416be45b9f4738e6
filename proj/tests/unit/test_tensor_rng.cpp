// Copyright 2026 The cyclevae Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "cyclevae/error.hpp"
#include "cyclevae/rng.hpp"
#include "cyclevae/tensor.hpp"

using namespace cyclevae;

TEST_CASE("tensor construction and views") {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.shape() == Shape{2, 3});
  CHECK(m.size() == 6);
  CHECK(m(1, 2) == 6);
  CHECK(m.row_range(1, 2) == Tensor::matrix({{4, 5, 6}}));
  CHECK(m.col_range(1, 3) == Tensor::matrix({{2, 3}, {5, 6}}));
  CHECK(m.reshaped(Shape{3, 2})(2, 1) == 6);
  CHECK(hconcat(m, m.col_range(0, 1)) == Tensor::matrix({{1, 2, 3, 1}, {4, 5, 6, 4}}));
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK(Tensor().item() == 0.0);
  CHECK(max_abs_diff(m, m) == 0.0);

  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(m.item(), ShapeError);
  CHECK_THROWS_AS(m.reshaped(Shape{4}), ShapeError);
  CHECK_THROWS_AS(Shape({1, 2, 3, 4, 5}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2, 2}).rows(), ShapeError);
}

TEST_CASE("all_finite") {
  Tensor t = Tensor::vector({1, 2});
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("rng determinism and state round-trip") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());

  const std::string state = a.save_state();
  std::vector<double> expected;
  for (int i = 0; i < 50; ++i) expected.push_back(a.uniform());
  Rng c(7);
  c.load_state(state);
  for (int i = 0; i < 50; ++i) CHECK(c.uniform() == expected[static_cast<std::size_t>(i)]);

  CHECK_THROWS_AS(c.load_state("not a state"), FormatError);
}

TEST_CASE("rng distributions") {
  Rng rng(1);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);

  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) ++counts[rng.index(5)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 400);
  CHECK_THROWS_AS(rng.index(0), ConfigError);

  int kept = 0;
  for (int i = 0; i < 20000; ++i) {
    const double m = rng.dropout_mask(0.25);
    CHECK_UNARY(m == 0.0 || m == 4.0);
    kept += m > 0.0;
  }
  CHECK(std::abs(kept / 20000.0 - 0.25) < 0.015);
}
