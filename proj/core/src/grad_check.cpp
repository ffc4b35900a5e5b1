#include "uqfire/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace uqfire {

bool GradCheckReport::passed() const {
  return std::all_of(params.begin(), params.end(),
                     [](const ParamGradError& p) { return p.passed; });
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& p : params) w = std::max(w, p.max_rel_error);
  return w;
}

GradCheckReport grad_check(const std::function<Tensor()>& loss,
                           std::vector<Tensor> params,
                           std::vector<std::string> names, double step,
                           double tolerance, double abs_floor) {
  GradCheckReport report;
  report.tolerance = tolerance;

  for (auto& p : params) p.zero_grad();
  Tensor value = loss();
  if (value.requires_grad()) backward(value);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.size(), 0.0);
    }
  }

  for (std::size_t k = 0; k < params.size(); ++k) {
    ParamGradError err;
    err.name = k < names.size() ? names[k] : "param" + std::to_string(k);
    auto values = params[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      double f_plus = 0.0, f_minus = 0.0;
      {
        NoGradGuard no_grad;
        values[i] = original + step;
        f_plus = loss().item();
        values[i] = original - step;
        f_minus = loss().item();
      }
      values[i] = original;
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      err.max_abs_error = std::max(err.max_abs_error, abs_err);
      err.max_rel_error = std::max(err.max_rel_error, abs_err / denom);
    }
    err.passed = err.max_rel_error < tolerance;
    report.params.push_back(std::move(err));
  }
  for (auto& p : params) p.zero_grad();
  return report;
}

}  // namespace uqfire
