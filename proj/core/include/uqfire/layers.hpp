#pragma once

#include <span>
#include <utility>
#include <vector>

#include "uqfire/data.hpp"
#include "uqfire/rng.hpp"
#include "uqfire/tensor.hpp"

namespace uqfire {

/// y = x . W^T + b, W stored (out x in).
struct LinearLayer {
  Tensor weight;
  Tensor bias;

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  /// uniform(-a, a) with a = 1/sqrt(in) for weight and bias.
  static LinearLayer init(std::size_t in, std::size_t out, Rng& rng,
                          bool requires_grad = true);
};

Tensor linear_forward(const LinearLayer& layer, const Tensor& x);

/// Single-layer LSTM. Gate blocks of W (4H x in), U (4H x H) and b (4H) are
/// ordered input, forget, cell, output.
struct LstmLayer {
  Tensor W;
  Tensor U;
  Tensor b;

  std::size_t hidden_size() const { return U.dim(1); }
  std::size_t input_size() const { return W.dim(1); }

  /// uniform(-a, a) with a = 1/sqrt(hidden); forget-gate bias starts at 1.
  static LstmLayer init(std::size_t input, std::size_t hidden, Rng& rng,
                        bool requires_grad = true);
};

struct LstmState {
  Tensor h;
  Tensor c;
};

/// One recurrence step on x_t (batch x in), returning (h_t, c_t).
LstmState lstm_step(const LstmLayer& layer, const Tensor& x_t,
                    const Tensor& h_prev, const Tensor& c_prev);

/// Runs from a zero state over x (batch x T x in); returns the final h.
Tensor lstm_sequence(const LstmLayer& layer, const Tensor& x);

enum class DropoutMode { train, eval };

/// Inverted dropout: kept units are scaled by 1/(1-rate). Identity in eval
/// mode or when rate == 0. Throws std::invalid_argument unless 0 <= rate < 1.
Tensor dropout_apply(const Tensor& x, double rate, DropoutMode mode, Rng& rng);

/// Same as dropout_apply but row r of x (batch x units) draws its mask from
/// row_rngs[r], so a record's mask does not depend on its batch neighbours.
Tensor dropout_apply_rows(const Tensor& x, double rate, DropoutMode mode,
                          std::span<Rng> row_rngs);

/// Per-feature standardisation fitted on the training split.
struct Normalizer {
  static constexpr double kStdFloor = 1e-8;

  std::vector<double> dynamic_mean;
  std::vector<double> dynamic_std;
  std::vector<double> static_mean;
  std::vector<double> static_std;

  bool operator==(const Normalizer&) const = default;
};

/// Population (1/N) statistics; dynamic features pool all observed days.
/// Throws std::invalid_argument on an empty training set.
Normalizer fit_normalizer(const Dataset& training);

/// Applies the transform once. Applying it twice is not the identity.
SampleRecord apply_normalizer(const Normalizer& norm, const SampleRecord& record);
Dataset apply_normalizer(const Normalizer& norm, const Dataset& dataset);

}  // namespace uqfire
