#include "uqfire/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uqfire {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng, bool requires_grad) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must be in [0,1), got " + std::to_string(rate));
  }
}

}  // namespace

LinearLayer LinearLayer::init(std::size_t in, std::size_t out, Rng& rng, bool requires_grad) {
  const double a = 1.0 / std::sqrt(static_cast<double>(in));
  LinearLayer l;
  l.weight = uniform_tensor({out, in}, a, rng, requires_grad);
  l.bias = uniform_tensor({out}, a, rng, requires_grad);
  return l;
}

Tensor linear_forward(const LinearLayer& layer, const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != layer.in_features()) {
    throw ShapeError("linear: input " + shape_to_string(x.shape()) + " does not match weight " +
                     shape_to_string(layer.weight.shape()));
  }
  return add(matmul(x, layer.weight, /*transpose_b=*/true), layer.bias);
}

LstmLayer LstmLayer::init(std::size_t input, std::size_t hidden, Rng& rng, bool requires_grad) {
  const double a = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmLayer l;
  l.W = uniform_tensor({4 * hidden, input}, a, rng, requires_grad);
  l.U = uniform_tensor({4 * hidden, hidden}, a, rng, requires_grad);
  std::vector<double> bias(4 * hidden);
  for (double& v : bias) v = rng.uniform(-a, a);
  std::fill(bias.begin() + static_cast<std::ptrdiff_t>(hidden),
            bias.begin() + static_cast<std::ptrdiff_t>(2 * hidden), 1.0);
  l.b = Tensor({4 * hidden}, std::move(bias), requires_grad);
  return l;
}

LstmState lstm_step(const LstmLayer& layer, const Tensor& x_t, const Tensor& h_prev,
                    const Tensor& c_prev) {
  const std::size_t H = layer.hidden_size();
  if (x_t.rank() != 2 || x_t.dim(1) != layer.input_size()) {
    throw ShapeError("lstm_step: input " + shape_to_string(x_t.shape()) + " vs W " +
                     shape_to_string(layer.W.shape()));
  }
  if (h_prev.shape() != Shape{x_t.dim(0), H} || c_prev.shape() != h_prev.shape()) {
    throw ShapeError("lstm_step: state shapes " + shape_to_string(h_prev.shape()) + "/" +
                     shape_to_string(c_prev.shape()) + " do not match batch x hidden");
  }
  const Tensor z = add(add(matmul(x_t, layer.W, true), matmul(h_prev, layer.U, true)), layer.b);
  const Tensor i = sigmoid(slice(z, 1, 0, H));
  const Tensor f = sigmoid(slice(z, 1, H, H));
  const Tensor g = tanh(slice(z, 1, 2 * H, H));
  const Tensor o = sigmoid(slice(z, 1, 3 * H, H));
  Tensor c = add(mul(f, c_prev), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {std::move(h), std::move(c)};
}

Tensor lstm_sequence(const LstmLayer& layer, const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("lstm_sequence: expected batch x T x features, got " +
                                      shape_to_string(x.shape()));
  const std::size_t batch = x.dim(0), T = x.dim(1), F = x.dim(2);
  if (T == 0) throw std::invalid_argument("lstm_sequence: sequence length must be >= 1");
  const std::size_t H = layer.hidden_size();
  LstmState state{Tensor::zeros({batch, H}), Tensor::zeros({batch, H})};
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor x_t = reshape(slice(x, 1, t, 1), {batch, F});
    state = lstm_step(layer, x_t, state.h, state.c);
  }
  return state.h;
}

Tensor dropout_apply(const Tensor& x, double rate, DropoutMode mode, Rng& rng) {
  check_rate(rate);
  if (mode == DropoutMode::eval || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

Tensor dropout_apply_rows(const Tensor& x, double rate, DropoutMode mode,
                          std::span<Rng> row_rngs) {
  check_rate(rate);
  if (mode == DropoutMode::eval || rate == 0.0) return x;
  if (x.rank() != 2 || x.dim(0) != row_rngs.size()) {
    throw ShapeError("dropout_apply_rows: need one rng per row of " + shape_to_string(x.shape()));
  }
  const double keep = 1.0 - rate;
  const std::size_t cols = x.dim(1);
  std::vector<double> mask(x.size());
  for (std::size_t r = 0; r < row_rngs.size(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      mask[r * cols + c] = row_rngs[r].uniform() < keep ? 1.0 / keep : 0.0;
    }
  }
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

Normalizer fit_normalizer(const Dataset& training) {
  if (training.records.empty()) {
    throw std::invalid_argument("fit_normalizer: training split is empty");
  }
  const std::size_t dd = training.schema.dynamic_dim();
  const std::size_t ds = training.schema.static_dim();
  Normalizer n;
  n.dynamic_mean.assign(dd, 0.0);
  n.dynamic_std.assign(dd, 0.0);
  n.static_mean.assign(ds, 0.0);
  n.static_std.assign(ds, 0.0);

  const double n_dyn = static_cast<double>(training.records.size() * kObservedDays);
  const double n_sta = static_cast<double>(training.records.size());
  for (const auto& r : training.records) {
    for (std::size_t t = 0; t < kObservedDays; ++t) {
      for (std::size_t f = 0; f < dd; ++f) n.dynamic_mean[f] += r.dynamic[t * dd + f];
    }
    for (std::size_t f = 0; f < ds; ++f) n.static_mean[f] += r.statics[f];
  }
  for (double& m : n.dynamic_mean) m /= n_dyn;
  for (double& m : n.static_mean) m /= n_sta;
  for (const auto& r : training.records) {
    for (std::size_t t = 0; t < kObservedDays; ++t) {
      for (std::size_t f = 0; f < dd; ++f) {
        const double d = r.dynamic[t * dd + f] - n.dynamic_mean[f];
        n.dynamic_std[f] += d * d;
      }
    }
    for (std::size_t f = 0; f < ds; ++f) {
      const double d = r.statics[f] - n.static_mean[f];
      n.static_std[f] += d * d;
    }
  }
  for (double& s : n.dynamic_std) s = std::max(std::sqrt(s / n_dyn), Normalizer::kStdFloor);
  for (double& s : n.static_std) s = std::max(std::sqrt(s / n_sta), Normalizer::kStdFloor);
  return n;
}

SampleRecord apply_normalizer(const Normalizer& norm, const SampleRecord& record) {
  const std::size_t dd = norm.dynamic_mean.size();
  const std::size_t ds = norm.static_mean.size();
  if (record.dynamic.size() != dd * kObservedDays || record.statics.size() != ds) {
    throw ShapeError("apply_normalizer: record '" + record.record_id +
                     "' does not match normalizer feature counts");
  }
  SampleRecord out = record;
  for (std::size_t t = 0; t < kObservedDays; ++t) {
    for (std::size_t f = 0; f < dd; ++f) {
      double& v = out.dynamic[t * dd + f];
      v = (v - norm.dynamic_mean[f]) / norm.dynamic_std[f];
    }
  }
  for (std::size_t f = 0; f < ds; ++f) {
    out.statics[f] = (out.statics[f] - norm.static_mean[f]) / norm.static_std[f];
  }
  return out;
}

Dataset apply_normalizer(const Normalizer& norm, const Dataset& dataset) {
  Dataset out;
  out.schema = dataset.schema;
  out.records.reserve(dataset.records.size());
  for (const auto& r : dataset.records) out.records.push_back(apply_normalizer(norm, r));
  return out;
}

}  // namespace uqfire
