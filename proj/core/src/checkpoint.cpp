#include "uqfire/checkpoint.hpp"

#include <nlohmann/json.hpp>
#include <stdexcept>

#include "uqfire/io_util.hpp"

namespace uqfire {

namespace {

using json = nlohmann::ordered_json;

constexpr std::string_view kFormat = "uqfire-checkpoint";
constexpr int kVersion = 1;

json tensor_values(const Tensor& t) { return json(std::vector<double>(t.data().begin(), t.data().end())); }

Tensor tensor_from(const json& values, const Shape& shape) {
  auto v = values.get<std::vector<double>>();
  return Tensor(shape, std::move(v), true);
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  const Model& m = c.model;
  const Architecture& a = m.architecture();
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["variant"] = c.variant;
  j["config_hash"] = c.config_hash;
  j["weight_kind"] = m.kind() == WeightKind::variational ? "variational" : "deterministic";
  j["architecture"] = {{"input_features", a.input_features}, {"lstm_hidden", a.lstm_hidden},
                       {"fc1", a.fc1},   {"fc2", a.fc2},
                       {"classes", a.classes}, {"dropout", a.dropout},
                       {"head", std::string(head_type_name(a.head))}};
  j["normalizer"] = {{"dynamic_mean", c.normalizer.dynamic_mean},
                     {"dynamic_std", c.normalizer.dynamic_std},
                     {"static_mean", c.normalizer.static_mean},
                     {"static_std", c.normalizer.static_std}};
  json params = json::array();
  for (const auto& s : m.slots()) {
    json p;
    p["name"] = s.name;
    if (m.kind() == WeightKind::deterministic) {
      p["shape"] = s.value.shape();
      p["value"] = tensor_values(s.value);
    } else {
      p["shape"] = s.vp.mu.shape();
      p["prior_std"] = s.vp.prior_std;
      p["mu"] = tensor_values(s.vp.mu);
      p["rho"] = tensor_values(s.vp.rho);
    }
    params.push_back(std::move(p));
  }
  j["parameters"] = std::move(params);
  return j.dump() + "\n";
}

Checkpoint deserialize_checkpoint(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  if (j.value("format", "") != kFormat) throw std::runtime_error("checkpoint: wrong format tag");
  if (j.value("version", 0) != kVersion) throw std::runtime_error("checkpoint: unsupported version");
  try {
    Checkpoint c;
    c.variant = j.at("variant").get<std::string>();
    c.config_hash = j.at("config_hash").get<std::string>();
    const auto& ja = j.at("architecture");
    Architecture a;
    a.input_features = ja.at("input_features").get<std::size_t>();
    a.lstm_hidden = ja.at("lstm_hidden").get<std::size_t>();
    a.fc1 = ja.at("fc1").get<std::size_t>();
    a.fc2 = ja.at("fc2").get<std::size_t>();
    a.classes = ja.at("classes").get<std::size_t>();
    a.dropout = ja.at("dropout").get<double>();
    a.head = parse_head_type(ja.at("head").get<std::string>());
    const std::string kind_name = j.at("weight_kind").get<std::string>();
    if (kind_name != "deterministic" && kind_name != "variational") {
      throw std::runtime_error("unknown weight kind '" + kind_name + "'");
    }
    const WeightKind kind =
        kind_name == "variational" ? WeightKind::variational : WeightKind::deterministic;

    const auto& jn = j.at("normalizer");
    c.normalizer.dynamic_mean = jn.at("dynamic_mean").get<std::vector<double>>();
    c.normalizer.dynamic_std = jn.at("dynamic_std").get<std::vector<double>>();
    c.normalizer.static_mean = jn.at("static_mean").get<std::vector<double>>();
    c.normalizer.static_std = jn.at("static_std").get<std::vector<double>>();

    std::vector<ParamSlot> slots;
    for (const auto& p : j.at("parameters")) {
      ParamSlot s;
      s.name = p.at("name").get<std::string>();
      const Shape shape = p.at("shape").get<Shape>();
      if (kind == WeightKind::deterministic) {
        s.value = tensor_from(p.at("value"), shape);
      } else {
        s.vp.mu = tensor_from(p.at("mu"), shape);
        s.vp.rho = tensor_from(p.at("rho"), shape);
        s.vp.prior_std = p.at("prior_std").get<double>();
      }
      slots.push_back(std::move(s));
    }
    c.model = Model::from_slots(a, kind, std::move(slots));
    c.model.set_trained(true);
    return c;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: malformed field: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_text_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(read_text_file(path));
}

}  // namespace uqfire
