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

#include "cyclevae/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cyclevae/error.hpp"

namespace cyclevae {

VarMap bind_parameters(Graph& g, const ParamMap& params) {
  VarMap vars;
  for (const auto& [name, tensor] : params) vars.emplace(name, g.parameter(tensor));
  return vars;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const ScalarFn& fn, const ParamMap& params) {
  Graph g;
  const VarMap vars = bind_parameters(g, params);
  const double value = g.forward(fn(g, vars)).item();
  if (!std::isfinite(value)) throw DivergenceError("grad_check: function value is not finite");
  return value;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& fn, const ParamMap& params, double step) {
  if (!(step > 0.0)) throw ConfigError("grad_check: step must be positive");

  ParamMap analytic;
  {
    Graph g;
    const VarMap vars = bind_parameters(g, params);
    const Var root = fn(g, vars);
    const double value = g.forward(root).item();
    if (!std::isfinite(value)) throw DivergenceError("grad_check: function value is not finite");
    g.backward(root);
    for (const auto& [name, var] : vars) analytic.emplace(name, g.grad(var));
  }

  GradCheckReport report;
  ParamMap probe = params;
  for (auto& [name, tensor] : probe) {
    const Tensor& grad = analytic.at(name);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double original = tensor[i];
      tensor[i] = original + step;
      const double plus = evaluate(fn, probe);
      tensor[i] = original - step;
      const double minus = evaluate(fn, probe);
      tensor[i] = original;

      const double numeric = (plus - minus) / (2.0 * step);
      const double err = relative_error(grad[i], numeric);
      ++report.entries_checked;
      if (report.worst_parameter.empty() || err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = name;
        report.worst_index = i;
        report.worst_analytic = grad[i];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace cyclevae
