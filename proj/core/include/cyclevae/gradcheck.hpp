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

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>

#include "cyclevae/autodiff.hpp"

namespace cyclevae {

/// Named tensors in a deterministic (lexicographic) order.
using ParamMap = std::map<std::string, Tensor>;
using VarMap = std::map<std::string, Var>;

/// Registers every tensor of params as a trainable leaf of g.
VarMap bind_parameters(Graph& g, const ParamMap& params);

struct GradCheckReport {
  /// max over entries of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Builds a scalar loss from bound parameters. Must be a deterministic
/// function of the parameter values (fix any noise inside the callback).
using ScalarFn = std::function<Var(Graph&, const VarMap&)>;

/// Compares backward() against central differences (f(p+h) - f(p-h)) / 2h for
/// every entry of every parameter.
GradCheckReport grad_check(const ScalarFn& fn, const ParamMap& params, double step = 1e-5);

double relative_error(double analytic, double numeric);

}  // namespace cyclevae
