#include "uqfire/network.hpp"

#include <functional>
#include <stdexcept>

namespace uqfire {

std::string_view head_type_name(HeadType head) {
  return head == HeadType::heteroscedastic ? "heteroscedastic" : "softmax";
}

HeadType parse_head_type(std::string_view name) {
  if (name == "softmax") return HeadType::softmax;
  if (name == "heteroscedastic") return HeadType::heteroscedastic;
  throw std::invalid_argument("unknown head type '" + std::string(name) + "'");
}

void Architecture::validate() const {
  if (input_features == 0 || lstm_hidden == 0 || fc1 == 0 || fc2 == 0 || classes < 2) {
    throw std::invalid_argument("architecture: all layer sizes must be positive, classes >= 2");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw std::invalid_argument("architecture: dropout must be in [0,1)");
  }
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const Architecture& a) {
  const std::size_t H = a.lstm_hidden;
  std::vector<std::pair<std::string, Shape>> layout = {
      {"lstm.W", {4 * H, a.input_features}},
      {"lstm.U", {4 * H, H}},
      {"lstm.b", {4 * H}},
      {"fc1.weight", {a.fc1, H}},
      {"fc1.bias", {a.fc1}},
      {"fc2.weight", {a.fc2, a.fc1}},
      {"fc2.bias", {a.fc2}},
      {"head.mean.weight", {a.classes, a.fc2}},
      {"head.mean.bias", {a.classes}},
  };
  if (a.head == HeadType::heteroscedastic) {
    layout.push_back({"head.scale.weight", {a.classes, a.fc2}});
    layout.push_back({"head.scale.bias", {a.classes}});
  }
  return layout;
}

namespace {

NetworkOutput forward_impl(const Architecture& arch, const NetworkWeights& w, const Tensor& x,
                           const std::function<Tensor(const Tensor&)>& drop) {
  if (x.rank() != 3 || x.dim(2) != arch.input_features) {
    throw ShapeError("network: input " + shape_to_string(x.shape()) + " expects " +
                     std::to_string(arch.input_features) + " features per step");
  }
  const Tensor h = lstm_sequence(w.lstm, x);
  const Tensor a1 = drop(relu(linear_forward(w.fc1, h)));
  const Tensor a2 = drop(relu(linear_forward(w.fc2, a1)));
  NetworkOutput out;
  out.logits = linear_forward(w.logits, a2);
  if (arch.head == HeadType::heteroscedastic) {
    if (!w.scale) throw std::logic_error("network: heteroscedastic head without scale branch");
    out.sigma = logit_scale(*w.scale, a2);
  }
  return out;
}

}  // namespace

NetworkOutput network_forward(const Architecture& arch, const NetworkWeights& w, const Tensor& x,
                              DropoutMode mode, Rng& dropout_rng) {
  return forward_impl(arch, w, x, [&](const Tensor& t) {
    return dropout_apply(t, arch.dropout, mode, dropout_rng);
  });
}

NetworkOutput network_forward_rows(const Architecture& arch, const NetworkWeights& w,
                                   const Tensor& x, DropoutMode mode, std::span<Rng> row_rngs) {
  return forward_impl(arch, w, x, [&](const Tensor& t) {
    return dropout_apply_rows(t, arch.dropout, mode, row_rngs);
  });
}

// ---------------------------------------------------------------------------
// Model

Model Model::create(const Architecture& arch, WeightKind kind, Rng& init_rng,
                    const VariationalInit& vinit) {
  arch.validate();
  Model m;
  m.arch_ = arch;
  m.kind_ = kind;
  const LstmLayer lstm = LstmLayer::init(arch.input_features, arch.lstm_hidden, init_rng, false);
  const LinearLayer fc1 = LinearLayer::init(arch.lstm_hidden, arch.fc1, init_rng, false);
  const LinearLayer fc2 = LinearLayer::init(arch.fc1, arch.fc2, init_rng, false);
  const LinearLayer out = LinearLayer::init(arch.fc2, arch.classes, init_rng, false);
  std::vector<Tensor> init = {lstm.W, lstm.U, lstm.b, fc1.weight, fc1.bias,
                              fc2.weight, fc2.bias, out.weight, out.bias};
  if (arch.head == HeadType::heteroscedastic) {
    const LinearLayer scale = LinearLayer::init(arch.fc2, arch.classes, init_rng, false);
    init.push_back(scale.weight);
    init.push_back(scale.bias);
  }
  const auto layout = parameter_layout(arch);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    ParamSlot slot;
    slot.name = layout[i].first;
    if (kind == WeightKind::deterministic) {
      slot.value = Tensor(init[i].shape(),
                          std::vector<double>(init[i].data().begin(), init[i].data().end()), true);
    } else {
      slot.vp = VariationalParameter::from_mean(init[i], vinit.rho_init, vinit.prior_std, true);
    }
    m.slots_.push_back(std::move(slot));
  }
  return m;
}

Model Model::from_slots(const Architecture& arch, WeightKind kind, std::vector<ParamSlot> slots) {
  arch.validate();
  const auto layout = parameter_layout(arch);
  if (slots.size() != layout.size()) {
    throw std::invalid_argument("model: expected " + std::to_string(layout.size()) +
                                " parameter slots, got " + std::to_string(slots.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& s = slots[i];
    if (s.name != layout[i].first) {
      throw std::invalid_argument("model: slot '" + s.name + "' where '" + layout[i].first +
                                  "' was expected");
    }
    const Shape& got = kind == WeightKind::deterministic ? s.value.shape() : s.vp.mu.shape();
    if (got != layout[i].second ||
        (kind == WeightKind::variational && s.vp.rho.shape() != layout[i].second)) {
      throw ShapeError("model: slot '" + s.name + "' has shape " + shape_to_string(got) +
                       ", expected " + shape_to_string(layout[i].second));
    }
  }
  Model m;
  m.arch_ = arch;
  m.kind_ = kind;
  m.slots_ = std::move(slots);
  return m;
}

std::vector<Tensor> Model::trainable_parameters() const {
  std::vector<Tensor> out;
  for (const auto& s : slots_) {
    if (kind_ == WeightKind::deterministic) {
      out.push_back(s.value);
    } else {
      out.push_back(s.vp.mu);
      out.push_back(s.vp.rho);
    }
  }
  return out;
}

std::vector<std::string> Model::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& s : slots_) {
    if (kind_ == WeightKind::deterministic) {
      out.push_back(s.name);
    } else {
      out.push_back(s.name + ".mu");
      out.push_back(s.name + ".rho");
    }
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : trainable_parameters()) n += t.size();
  return n;
}

NetworkWeights Model::assemble(const std::vector<Tensor>& t) const {
  NetworkWeights w;
  w.lstm = LstmLayer{t[0], t[1], t[2]};
  w.fc1 = LinearLayer{t[3], t[4]};
  w.fc2 = LinearLayer{t[5], t[6]};
  w.logits = LinearLayer{t[7], t[8]};
  if (arch_.head == HeadType::heteroscedastic) w.scale = LinearLayer{t[9], t[10]};
  return w;
}

NetworkWeights Model::mean_weights() const {
  std::vector<Tensor> t;
  t.reserve(slots_.size());
  for (const auto& s : slots_) t.push_back(kind_ == WeightKind::deterministic ? s.value : s.vp.mu);
  return assemble(t);
}

NetworkWeights Model::sample_weights(Rng& rng, double sigma_scale) const {
  if (kind_ == WeightKind::deterministic) return mean_weights();
  std::vector<Tensor> t;
  t.reserve(slots_.size());
  for (const auto& s : slots_) t.push_back(uqfire::sample_weights(s.vp, rng, sigma_scale));
  return assemble(t);
}

Tensor Model::kl() const {
  if (kind_ == WeightKind::deterministic) return Tensor::scalar(0.0);
  Tensor total;
  for (const auto& s : slots_) {
    Tensor k = kl_gaussian(s.vp);
    total = total.defined() ? add(total, k) : k;
  }
  return total;
}

Model Model::clone() const {
  Model m;
  m.arch_ = arch_;
  m.kind_ = kind_;
  m.trained_ = trained_;
  auto copy = [](const Tensor& t) {
    return t.defined() ? Tensor(t.shape(), std::vector<double>(t.data().begin(), t.data().end()),
                                t.requires_grad())
                       : Tensor();
  };
  for (const auto& s : slots_) {
    ParamSlot c;
    c.name = s.name;
    c.value = copy(s.value);
    c.vp.mu = copy(s.vp.mu);
    c.vp.rho = copy(s.vp.rho);
    c.vp.prior_std = s.vp.prior_std;
    m.slots_.push_back(std::move(c));
  }
  return m;
}

void Model::copy_values_from(const Model& other) {
  auto dst = trainable_parameters();
  const auto src = other.trainable_parameters();
  if (dst.size() != src.size()) throw std::invalid_argument("copy_values_from: layout mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].shape() != src[i].shape()) {
      throw ShapeError("copy_values_from: shape mismatch in parameter " + std::to_string(i));
    }
    auto d = dst[i].mutable_data();
    std::copy(src[i].data().begin(), src[i].data().end(), d.begin());
  }
}

void Model::set_requires_grad(bool on) {
  for (auto& t : trainable_parameters()) t.set_requires_grad(on);
}

// ---------------------------------------------------------------------------
// Batches and losses

Batch make_batch(std::span<const WindowedInstance> instances) {
  std::vector<std::size_t> rows(instances.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return make_batch(instances, rows);
}

Batch make_batch(std::span<const WindowedInstance> instances, std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("make_batch: empty batch");
  const std::size_t width = instances[rows[0]].features.size();
  if (width % kWindowDays != 0) throw ShapeError("make_batch: malformed window features");
  const std::size_t F = width / kWindowDays;
  std::vector<double> x;
  x.reserve(rows.size() * width);
  Batch b;
  for (std::size_t r : rows) {
    const auto& w = instances[r];
    if (w.features.size() != width) throw ShapeError("make_batch: windows differ in width");
    x.insert(x.end(), w.features.begin(), w.features.end());
    b.labels.push_back(w.label);
    b.weights.push_back(w.weight);
  }
  b.x = Tensor({rows.size(), kWindowDays, F}, std::move(x));
  return b;
}

Tensor data_loss(const Architecture& arch, const NetworkOutput& out, const Batch& batch,
                 const LossOptions& opt, Rng& logit_rng) {
  if (arch.head == HeadType::heteroscedastic) {
    const auto mc = tempered_softmax_mc(out.logits, out.sigma, opt.temperature,
                                        opt.logit_samples, logit_rng);
    return hetero_nll_loss(mc.p, batch.labels, batch.weights);
  }
  return weighted_nll(softmax_last_axis(out.logits), batch.labels, batch.weights);
}

LossTerms elbo_loss(const Model& model, const Batch& batch, Rng& weight_rng, Rng& dropout_rng,
                    Rng& logit_rng, const LossOptions& opt) {
  if (batch.size() == 0) throw std::invalid_argument("elbo_loss: empty batch");
  const NetworkWeights w = model.sample_weights(weight_rng);
  const NetworkOutput out =
      network_forward(model.architecture(), w, batch.x, DropoutMode::train, dropout_rng);
  const Tensor dl = data_loss(model.architecture(), out, batch, opt, logit_rng);
  LossTerms terms;
  terms.data_loss = dl.item();
  if (model.kind() == WeightKind::variational && opt.kl_weight != 0.0) {
    const Tensor kl = model.kl();
    terms.kl = kl.item();
    terms.total = add(dl, scalar_mul(kl, opt.kl_weight));
  } else {
    if (model.kind() == WeightKind::variational) terms.kl = model.kl().item();
    terms.total = dl;
  }
  return terms;
}

}  // namespace uqfire
