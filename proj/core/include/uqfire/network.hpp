#pragma once

// The classifier: normalise -> LSTM -> FC -> ReLU -> dropout -> FC -> ReLU
// -> dropout -> output head (softmax or heteroscedastic). A Model owns the
// trainable parameters either as plain tensors or as Gaussian variational
// posteriors; both are turned into concrete NetworkWeights for a forward
// pass.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uqfire/data.hpp"
#include "uqfire/hetero_head.hpp"
#include "uqfire/layers.hpp"
#include "uqfire/variational.hpp"

namespace uqfire {

enum class HeadType { softmax, heteroscedastic };
enum class WeightKind { deterministic, variational };

std::string_view head_type_name(HeadType head);
HeadType parse_head_type(std::string_view name);

struct Architecture {
  std::size_t input_features = 0;  // D_dyn + D_sta per time step
  std::size_t lstm_hidden = 128;
  std::size_t fc1 = 128;
  std::size_t fc2 = 64;
  std::size_t classes = 2;
  double dropout = 0.5;
  HeadType head = HeadType::softmax;

  void validate() const;
  bool operator==(const Architecture&) const = default;
};

struct NetworkWeights {
  LstmLayer lstm;
  LinearLayer fc1;
  LinearLayer fc2;
  LinearLayer logits;                       // mean branch f
  std::optional<LinearLayer> scale;         // sigma branch, heteroscedastic only
};

struct NetworkOutput {
  Tensor logits;  // batch x K
  Tensor sigma;   // batch x K; undefined without a heteroscedastic head
};

/// x is batch x T x input_features. Dropout masks come from dropout_rng.
NetworkOutput network_forward(const Architecture& arch, const NetworkWeights& w,
                              const Tensor& x, DropoutMode mode, Rng& dropout_rng);

/// Per-row dropout streams (row_rngs.size() == batch).
NetworkOutput network_forward_rows(const Architecture& arch, const NetworkWeights& w,
                                   const Tensor& x, DropoutMode mode, std::span<Rng> row_rngs);

struct ParamSlot {
  std::string name;
  Tensor value;              // deterministic models
  VariationalParameter vp;   // variational models
};

struct VariationalInit {
  double rho_init = -5.0;
  double prior_std = 1.0;
};

class Model {
 public:
  Model() = default;
  static Model create(const Architecture& arch, WeightKind kind, Rng& init_rng,
                      const VariationalInit& vinit = {});

  const Architecture& architecture() const { return arch_; }
  WeightKind kind() const { return kind_; }
  std::span<const ParamSlot> slots() const { return slots_; }
  std::span<ParamSlot> slots() { return slots_; }

  /// Leaves updated by the optimiser (mu and rho for variational models).
  std::vector<Tensor> trainable_parameters() const;
  std::vector<std::string> trainable_names() const;
  std::size_t parameter_count() const;

  /// Deterministic weights, or the posterior means of a variational model.
  NetworkWeights mean_weights() const;
  /// One reparameterised draw (differentiable while grad is enabled).
  /// Deterministic models return mean_weights().
  NetworkWeights sample_weights(Rng& rng, double sigma_scale = 1.0) const;
  /// Sum of per-slot KL terms; zero scalar for deterministic models.
  Tensor kl() const;

  bool trained() const { return trained_; }
  void set_trained(bool on) { trained_ = on; }

  /// Deep copy with independent parameter storage.
  Model clone() const;
  /// Copies parameter values from another model of identical layout.
  void copy_values_from(const Model& other);
  void set_requires_grad(bool on);

  // Assembly from deserialised slots.
  static Model from_slots(const Architecture& arch, WeightKind kind,
                          std::vector<ParamSlot> slots);

 private:
  NetworkWeights assemble(const std::vector<Tensor>& tensors) const;

  Architecture arch_;
  WeightKind kind_ = WeightKind::deterministic;
  std::vector<ParamSlot> slots_;
  bool trained_ = false;
};

/// Slot names and shapes for an architecture, in canonical order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const Architecture& arch);

/// Stacked model inputs for a set of windows.
struct Batch {
  Tensor x;  // batch x T x F
  std::vector<int> labels;
  std::vector<double> weights;
  std::size_t size() const { return labels.size(); }
};

Batch make_batch(std::span<const WindowedInstance> instances);
Batch make_batch(std::span<const WindowedInstance> instances, std::span<const std::size_t> rows);

struct LossOptions {
  double temperature = kDefaultTemperature;
  std::size_t logit_samples = kDefaultLogitSamples;
  double kl_weight = 0.0;  // only used for variational models
};

struct LossTerms {
  Tensor total;
  double data_loss = 0.0;
  double kl = 0.0;
};

/// Data loss for one forward pass with the given weights: weighted
/// cross-entropy of softmax(f) or of the tempered-softmax MC mean.
Tensor data_loss(const Architecture& arch, const NetworkOutput& out, const Batch& batch,
                 const LossOptions& opt, Rng& logit_rng);

/// Negative ELBO for a variational model (one weight sample):
///   kl_weight * sum KL + data loss.
/// For deterministic models the KL term is absent. Draws weight noise,
/// dropout masks and logit noise from separate streams.
LossTerms elbo_loss(const Model& model, const Batch& batch, Rng& weight_rng, Rng& dropout_rng,
                    Rng& logit_rng, const LossOptions& opt);

}  // namespace uqfire
