#include "rotenc/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>

namespace rotenc {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::InvalidConfig, "config " + path + ": " + what);
}

/// Visits every key of an object, dispatching to a handler or failing on unknown keys.
void read_object(const json& j, const std::string& path, const std::map<std::string, std::function<void(const json&, const std::string&)>>& handlers) {
  if (!j.is_object()) config_error(path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    const std::string child = path.empty() ? key : path + "." + key;
    auto it = handlers.find(key);
    if (it == handlers.end()) config_error(child, "unknown key");
    it->second(value, child);
  }
}

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) config_error(path, "expected a number");
  return v.get<double>();
}

std::uint64_t as_u64(const json& v, const std::string& path) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
    config_error(path, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) config_error(path, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) config_error(path, "expected a string");
  return v.get<std::string>();
}

template <typename Enum>
Enum as_enum(const json& v, const std::string& path, const std::vector<std::pair<const char*, Enum>>& names) {
  const std::string s = as_string(v, path);
  std::string allowed;
  for (const auto& [name, value] : names) {
    if (s == name) return value;
    allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  }
  config_error(path, "'" + s + "' is not one of " + allowed);
}

template <typename Enum>
const char* enum_name(Enum e, const std::vector<std::pair<const char*, Enum>>& names) {
  for (const auto& [name, value] : names) {
    if (value == e) return name;
  }
  return "?";
}

const std::vector<std::pair<const char*, ad::Activation>> kActivations{{"relu", ad::Activation::relu},
                                                                        {"silu", ad::Activation::silu}};
const std::vector<std::pair<const char*, PoolMode>> kPools{{"mean", PoolMode::mean}, {"max", PoolMode::max}};
const std::vector<std::pair<const char*, AlignMode>> kAlign{
    {"none", AlignMode::none}, {"pre", AlignMode::pre}, {"post", AlignMode::post}};
const std::vector<std::pair<const char*, SamplingMode>> kSampling{{"haar_random", SamplingMode::haar_random},
                                                                   {"stratified", SamplingMode::stratified}};
const std::vector<std::pair<const char*, ReadoutMode>> kReadout{{"sum", ReadoutMode::sum}, {"mean", ReadoutMode::mean}};
const std::vector<std::pair<const char*, EdgeFeatureMode>> kEdges{{"auto", EdgeFeatureMode::automatic},
                                                                   {"bond", EdgeFeatureMode::bond},
                                                                   {"rbf", EdgeFeatureMode::rbf},
                                                                   {"none", EdgeFeatureMode::none}};
const std::vector<std::pair<const char*, Objective>> kObjectives{{"loss_of_mean", Objective::loss_of_mean},
                                                                  {"mean_of_loss", Objective::mean_of_loss}};
const std::vector<std::pair<const char*, SplitMode>> kSplits{{"kfold", SplitMode::kfold}, {"holdout", SplitMode::holdout}};

}  // namespace

ordered_json to_json(const ModelConfig& c) {
  std::vector<ad::Index> widths(c.encoder.widths.begin(), c.encoder.widths.end());
  ordered_json encoder{{"widths", widths},
                       {"pool", enum_name(c.encoder.pool, kPools)},
                       {"use_atom_embedding", c.encoder.use_atom_embedding},
                       {"embed_dim", c.encoder.embed_dim},
                       {"k", c.encoder.k},
                       {"sampling", enum_name(c.encoder.sampling, kSampling)},
                       {"align_mode", enum_name(c.encoder.align_mode, kAlign)},
                       {"use_pointwise", c.encoder.use_pointwise},
                       {"activation", enum_name(c.encoder.activation, kActivations)},
                       {"bn_eps", c.encoder.batchnorm.eps},
                       {"bn_momentum", c.encoder.batchnorm.momentum}};
  ordered_json gnn{{"layers", c.gnn.layers},
                   {"hidden", c.gnn.hidden},
                   {"message_width", c.gnn.message_width},
                   {"readout", enum_name(c.gnn.readout, kReadout)},
                   {"output_width", c.gnn.output_width},
                   {"activation", enum_name(c.gnn.activation, kActivations)}};
  ordered_json graph{{"cutoff", c.graph.cutoff},
                     {"edge_features", enum_name(c.graph.edge_features, kEdges)},
                     {"rbf",
                      {{"count", c.graph.rbf.count},
                       {"min", c.graph.rbf.min},
                       {"max", c.graph.rbf.max},
                       {"gamma", c.graph.rbf.gamma}}}};
  return ordered_json{{"lambda", c.lambda},
                      {"objective", enum_name(c.objective, kObjectives)},
                      {"use_3d", c.use_3d},
                      {"engineered_features", c.engineered_features},
                      {"head_hidden", c.head_hidden},
                      {"head_activation", enum_name(c.head_activation, kActivations)},
                      {"encoder", encoder},
                      {"gnn", gnn},
                      {"graph", graph}};
}

ordered_json to_json(const TrainConfig& c) {
  return ordered_json{{"epochs", c.epochs},
                      {"batch_size", c.batch_size},
                      {"lr", c.lr},
                      {"weight_decay", c.weight_decay},
                      {"betas", {c.beta1, c.beta2}},
                      {"eps", c.eps},
                      {"seed", c.seed},
                      {"inference_seed", c.inference_seed},
                      {"tasks", c.tasks},
                      {"split",
                       {{"mode", enum_name(c.split.mode, kSplits)},
                        {"k_folds", c.split.k_folds},
                        {"train_fraction", c.split.train_fraction},
                        {"seed", c.split.seed},
                        {"fold", c.split.fold}}},
                      {"model", to_json(c.model)}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  auto index = [](const json& v, const std::string& p) { return static_cast<ad::Index>(as_u64(v, p)); };
  read_object(j, "model", {
    {"lambda", [&](const json& v, const std::string& p) { c.lambda = as_double(v, p); }},
    {"objective", [&](const json& v, const std::string& p) { c.objective = as_enum(v, p, kObjectives); }},
    {"use_3d", [&](const json& v, const std::string& p) { c.use_3d = as_bool(v, p); }},
    {"engineered_features", [&](const json& v, const std::string& p) { c.engineered_features = as_bool(v, p); }},
    {"head_hidden", [&](const json& v, const std::string& p) { c.head_hidden = index(v, p); }},
    {"head_activation", [&](const json& v, const std::string& p) { c.head_activation = as_enum(v, p, kActivations); }},
    {"encoder", [&](const json& e, const std::string& ep) {
      read_object(e, ep, {
        {"widths", [&](const json& v, const std::string& p) {
          if (!v.is_array()) config_error(p, "expected an array of widths");
          c.encoder.widths.clear();
          for (std::size_t i = 0; i < v.size(); ++i) c.encoder.widths.push_back(index(v[i], p + "[" + std::to_string(i) + "]"));
        }},
        {"pool", [&](const json& v, const std::string& p) { c.encoder.pool = as_enum(v, p, kPools); }},
        {"use_atom_embedding", [&](const json& v, const std::string& p) { c.encoder.use_atom_embedding = as_bool(v, p); }},
        {"embed_dim", [&](const json& v, const std::string& p) { c.encoder.embed_dim = index(v, p); }},
        {"k", [&](const json& v, const std::string& p) { c.encoder.k = as_u64(v, p); }},
        {"sampling", [&](const json& v, const std::string& p) { c.encoder.sampling = as_enum(v, p, kSampling); }},
        {"align_mode", [&](const json& v, const std::string& p) { c.encoder.align_mode = as_enum(v, p, kAlign); }},
        {"use_pointwise", [&](const json& v, const std::string& p) { c.encoder.use_pointwise = as_bool(v, p); }},
        {"activation", [&](const json& v, const std::string& p) { c.encoder.activation = as_enum(v, p, kActivations); }},
        {"bn_eps", [&](const json& v, const std::string& p) { c.encoder.batchnorm.eps = as_double(v, p); }},
        {"bn_momentum", [&](const json& v, const std::string& p) { c.encoder.batchnorm.momentum = as_double(v, p); }},
      });
    }},
    {"gnn", [&](const json& g, const std::string& gp) {
      read_object(g, gp, {
        {"layers", [&](const json& v, const std::string& p) { c.gnn.layers = index(v, p); }},
        {"hidden", [&](const json& v, const std::string& p) { c.gnn.hidden = index(v, p); }},
        {"message_width", [&](const json& v, const std::string& p) { c.gnn.message_width = index(v, p); }},
        {"readout", [&](const json& v, const std::string& p) { c.gnn.readout = as_enum(v, p, kReadout); }},
        {"output_width", [&](const json& v, const std::string& p) { c.gnn.output_width = index(v, p); }},
        {"activation", [&](const json& v, const std::string& p) { c.gnn.activation = as_enum(v, p, kActivations); }},
      });
    }},
    {"graph", [&](const json& g, const std::string& gp) {
      read_object(g, gp, {
        {"cutoff", [&](const json& v, const std::string& p) { c.graph.cutoff = as_double(v, p); }},
        {"edge_features", [&](const json& v, const std::string& p) { c.graph.edge_features = as_enum(v, p, kEdges); }},
        {"rbf", [&](const json& r, const std::string& rp) {
          read_object(r, rp, {
            {"count", [&](const json& v, const std::string& p) { c.graph.rbf.count = index(v, p); }},
            {"min", [&](const json& v, const std::string& p) { c.graph.rbf.min = as_double(v, p); }},
            {"max", [&](const json& v, const std::string& p) { c.graph.rbf.max = as_double(v, p); }},
            {"gamma", [&](const json& v, const std::string& p) { c.graph.rbf.gamma = as_double(v, p); }},
          });
        }},
      });
    }},
  });
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  read_object(j, "", {
    {"epochs", [&](const json& v, const std::string& p) { c.epochs = as_u64(v, p); }},
    {"batch_size", [&](const json& v, const std::string& p) { c.batch_size = as_u64(v, p); }},
    {"lr", [&](const json& v, const std::string& p) { c.lr = as_double(v, p); }},
    {"weight_decay", [&](const json& v, const std::string& p) { c.weight_decay = as_double(v, p); }},
    {"betas", [&](const json& v, const std::string& p) {
      if (!v.is_array() || v.size() != 2) config_error(p, "expected [beta1, beta2]");
      c.beta1 = as_double(v[0], p + "[0]");
      c.beta2 = as_double(v[1], p + "[1]");
    }},
    {"eps", [&](const json& v, const std::string& p) { c.eps = as_double(v, p); }},
    {"seed", [&](const json& v, const std::string& p) { c.seed = as_u64(v, p); }},
    {"inference_seed", [&](const json& v, const std::string& p) { c.inference_seed = as_u64(v, p); }},
    {"tasks", [&](const json& v, const std::string& p) {
      if (!v.is_array()) config_error(p, "expected an array of task names");
      c.tasks.clear();
      for (const json& t : v) c.tasks.push_back(as_string(t, p));
    }},
    {"split", [&](const json& s, const std::string& sp) {
      read_object(s, sp, {
        {"mode", [&](const json& v, const std::string& p) { c.split.mode = as_enum(v, p, kSplits); }},
        {"k_folds", [&](const json& v, const std::string& p) { c.split.k_folds = as_u64(v, p); }},
        {"train_fraction", [&](const json& v, const std::string& p) { c.split.train_fraction = as_double(v, p); }},
        {"seed", [&](const json& v, const std::string& p) { c.split.seed = as_u64(v, p); }},
        {"fold", [&](const json& v, const std::string& p) { c.split.fold = as_u64(v, p); }},
      });
    }},
    {"model", [&](const json& v, const std::string&) { c.model = model_config_from_json(v); }},
  });
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be at least 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error(ErrorCode::InvalidConfig, "lr must be positive");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidConfig, "weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidConfig, "eps must be positive");
  model.validate();
  try {
    split.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return train_config_from_json(j);
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::InvalidConfig, "override '" + assignment + "' is not of the form key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw Error(ErrorCode::InvalidConfig, "override path '" + path + "' has an empty component");
    if (node->is_null()) *node = json::object();
    if (!node->is_object()) throw Error(ErrorCode::InvalidConfig, "override path '" + path + "' crosses a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace rotenc
