// Copyright 2026 uttenc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "uttenc/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace uttenc {

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kTap: return "tap";
    case EncoderKind::kSap: return "sap";
    case EncoderKind::kLde: return "lde";
  }
  return "?";
}

EncoderKind parse_encoder_kind(const std::string& name) {
  if (name == "tap") return EncoderKind::kTap;
  if (name == "sap") return EncoderKind::kSap;
  if (name == "lde") return EncoderKind::kLde;
  throw ConfigError("unknown encoder '" + name + "' (expected tap, sap or lde)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kSoftmax: return "softmax";
    case LossKind::kCenter: return "center";
    case LossKind::kASoftmax: return "asoftmax";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "softmax") return LossKind::kSoftmax;
  if (name == "center") return LossKind::kCenter;
  if (name == "asoftmax") return LossKind::kASoftmax;
  throw ConfigError("unknown loss '" + name + "' (expected softmax, center or asoftmax)");
}

std::string to_string(Precision p) { return p == Precision::kFloat32 ? "float32" : "float64"; }

namespace {

Precision parse_precision(const std::string& name) {
  if (name == "float32") return Precision::kFloat32;
  if (name == "float64") return Precision::kFloat64;
  throw ConfigError("unknown precision '" + name + "' (expected float32 or float64)");
}

std::string to_string(LdeAggregation a) {
  return a == LdeAggregation::kFrameMean ? "frame_mean" : "weight_normalized";
}

LdeAggregation parse_aggregation(const std::string& name) {
  if (name == "frame_mean") return LdeAggregation::kFrameMean;
  if (name == "weight_normalized") return LdeAggregation::kWeightNormalized;
  throw ConfigError("unknown lde_aggregation '" + name +
                    "' (expected frame_mean or weight_normalized)");
}

std::vector<std::string> frontend_problems(const FrontendConfig& f) {
  std::vector<std::string> out;
  if (f.base_channels < 1) out.push_back("frontend.base_channels must be >= 1");
  if (f.input_mels < 8 || f.input_mels % 8 != 0)
    out.push_back("frontend.input_mels must be a positive multiple of 8");
  if (!(f.width_multiplier > 0.0)) out.push_back("frontend.width_multiplier must be > 0");
  for (Index b : f.blocks_per_stage)
    if (b < 1) {
      out.push_back("frontend.blocks_per_stage entries must be >= 1");
      break;
    }
  return out;
}

std::vector<std::string> margin_problems(const MarginConfig& m) {
  std::vector<std::string> out;
  if (m.m < 1 || m.m > 4) out.push_back("loss.margin must be in 1..4, got " + std::to_string(m.m));
  if (m.anneal) {
    if (!(m.anneal_start >= m.anneal_floor)) out.push_back("loss.anneal.start must be >= floor");
    if (!(m.anneal_floor >= 0.0)) out.push_back("loss.anneal.floor must be >= 0");
    if (!(m.anneal_decay > 0.0 && m.anneal_decay <= 1.0))
      out.push_back("loss.anneal.decay must be in (0, 1]");
  }
  return out;
}

std::vector<std::string> model_problems(const ModelConfig& c, bool require_classes) {
  auto out = frontend_problems(c.frontend);
  auto margin = margin_problems(c.margin);
  out.insert(out.end(), margin.begin(), margin.end());
  if (c.lde_components < 1) out.push_back("encoder.lde_components must be >= 1");
  if (c.sap_hidden < 0) out.push_back("encoder.sap_hidden must be >= 0");
  if (c.embedding_dim < 1) out.push_back("embedding_dim must be >= 1");
  if (!(c.center_lambda >= 0.0)) out.push_back("loss.center_lambda must be >= 0");
  if (!(c.center_alpha > 0.0)) out.push_back("loss.center_alpha must be > 0");
  if (require_classes && c.num_classes < 2) out.push_back("num_classes must be >= 2");
  return out;
}

[[noreturn]] void throw_all(const std::vector<std::string>& problems) {
  std::string msg = "invalid configuration:";
  for (const auto& p : problems) msg += "\n  - " + p;
  throw ConfigError(msg);
}

}  // namespace

void FrontendConfig::validate() const {
  auto p = frontend_problems(*this);
  if (!p.empty()) throw_all(p);
}

Index FrontendConfig::stage_channels(int stage) const {
  const double c = static_cast<double>(base_channels) * std::ldexp(1.0, stage) * width_multiplier;
  return std::max<Index>(1, static_cast<Index>(std::lround(c)));
}

void MarginConfig::validate() const {
  auto p = margin_problems(*this);
  if (!p.empty()) throw_all(p);
}

double MarginConfig::lambda_at(long step) const {
  if (!anneal) return 0.0;
  return std::max(anneal_floor, anneal_start * std::pow(anneal_decay, static_cast<double>(step)));
}

void ModelConfig::validate() const {
  auto p = model_problems(*this, true);
  if (!p.empty()) throw_all(p);
}

Index ModelConfig::encoding_dim() const {
  const Index d = frontend.output_channels();
  return encoder == EncoderKind::kLde ? d * lde_components : d;
}

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> out;
  if (batch_size < 2) out.push_back("train.batch_size must be >= 2 (batch norm)");
  if (!(momentum >= 0.0 && momentum < 1.0)) out.push_back("train.momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) out.push_back("train.weight_decay must be >= 0");
  if (lr_stages.empty()) out.push_back("train.lr_stages must not be empty");
  for (double lr : lr_stages)
    if (!(lr > 0.0)) {
      out.push_back("train.lr_stages entries must be > 0");
      break;
    }
  if (crop_range[0] < 8) out.push_back("train.crop_range minimum must be >= 8 frames");
  if (crop_range[0] > crop_range[1]) out.push_back("train.crop_range min must be <= max");
  if (epochs < 1) out.push_back("train.epochs must be >= 1");
  if (plateau_patience < 1) out.push_back("train.plateau_patience must be >= 1");
  if (!(plateau_tolerance >= 0.0)) out.push_back("train.plateau_tolerance must be >= 0");
  if (target_train_acc && !(*target_train_acc > 0.0 && *target_train_acc <= 1.0))
    out.push_back("train.target_train_acc must be in (0, 1]");
  return out;
}

void TrainConfig::validate() const {
  auto p = problems();
  if (!p.empty()) throw_all(p);
}

RunConfig::RunConfig() { model.margin.anneal = true; }

std::vector<std::string> RunConfig::problems() const {
  auto out = model_problems(model, false);
  auto t = train.problems();
  out.insert(out.end(), t.begin(), t.end());
  if (!(metrics.p_target > 0.0 && metrics.p_target < 1.0))
    out.push_back("metrics.p_target must be in (0, 1)");
  if (!(metrics.c_miss > 0.0)) out.push_back("metrics.c_miss must be > 0");
  if (!(metrics.c_fa > 0.0)) out.push_back("metrics.c_fa must be > 0");
  return out;
}

void RunConfig::validate() const {
  auto p = problems();
  if (!p.empty()) throw_all(p);
}

nlohmann::json RunConfig::to_json() const {
  using nlohmann::json;
  const auto& f = model.frontend;
  json target = train.target_train_acc ? json(*train.target_train_acc) : json(nullptr);
  return {
      {"precision", to_string(precision)},
      {"frontend",
       {{"base_channels", f.base_channels},
        {"blocks_per_stage", f.blocks_per_stage},
        {"input_mels", f.input_mels},
        {"width_multiplier", f.width_multiplier}}},
      {"encoder",
       {{"kind", to_string(model.encoder)},
        {"lde_components", model.lde_components},
        {"lde_aggregation", to_string(model.lde_aggregation)},
        {"clamp_smoothing", model.clamp_smoothing},
        {"sap_hidden", model.sap_hidden}}},
      {"embedding_dim", model.embedding_dim},
      {"num_classes", model.num_classes},
      {"loss",
       {{"kind", to_string(model.loss)},
        {"margin", model.margin.m},
        {"anneal",
         {{"enabled", model.margin.anneal},
          {"start", model.margin.anneal_start},
          {"decay", model.margin.anneal_decay},
          {"floor", model.margin.anneal_floor}}},
        {"center_lambda", model.center_lambda},
        {"center_alpha", model.center_alpha}}},
      {"train",
       {{"batch_size", train.batch_size},
        {"momentum", train.momentum},
        {"weight_decay", train.weight_decay},
        {"lr_stages", train.lr_stages},
        {"crop_range", train.crop_range},
        {"epochs", train.epochs},
        {"seed", train.seed},
        {"plateau_patience", train.plateau_patience},
        {"plateau_tolerance", train.plateau_tolerance},
        {"target_train_acc", target}}},
      {"metrics",
       {{"p_target", metrics.p_target}, {"c_miss", metrics.c_miss}, {"c_fa", metrics.c_fa}}}};
}

namespace {

// Reads keys of one JSON object, recording unknown keys and type errors.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path, std::vector<std::string>& errors,
               std::set<std::string> allowed)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j.is_object()) {
      errors_.push_back(where() + " must be an object");
      return;
    }
    for (const auto& [key, _] : j.items())
      if (!allowed.count(key)) errors_.push_back("unknown key " + where(key));
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!j_.is_object() || !j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      errors_.push_back(where(key) + " has the wrong type");
    }
  }

  template <typename Parse, typename T>
  void read_enum(const std::string& key, T& out, Parse parse) {
    std::string name;
    if (!j_.is_object() || !j_.contains(key)) return;
    read(key, name);
    if (name.empty()) return;
    try {
      out = parse(name);
    } catch (const ConfigError& e) {
      errors_.push_back(where(key) + ": " + e.what());
    }
  }

  const nlohmann::json* child(const std::string& key) const {
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }
  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
};

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j, const RunConfig& base) {
  RunConfig c = base;
  std::vector<std::string> errors;
  ObjectReader root(j, "", errors,
                    {"precision", "frontend", "encoder", "embedding_dim", "num_classes", "loss",
                     "train", "metrics"});
  root.read_enum("precision", c.precision, parse_precision);
  root.read("embedding_dim", c.model.embedding_dim);
  root.read("num_classes", c.model.num_classes);
  if (const auto* f = root.child("frontend")) {
    ObjectReader r(*f, "frontend", errors,
                   {"base_channels", "blocks_per_stage", "input_mels", "width_multiplier"});
    r.read("base_channels", c.model.frontend.base_channels);
    r.read("blocks_per_stage", c.model.frontend.blocks_per_stage);
    r.read("input_mels", c.model.frontend.input_mels);
    r.read("width_multiplier", c.model.frontend.width_multiplier);
  }
  if (const auto* e = root.child("encoder")) {
    ObjectReader r(*e, "encoder", errors,
                   {"kind", "lde_components", "lde_aggregation", "clamp_smoothing", "sap_hidden"});
    r.read_enum("kind", c.model.encoder, parse_encoder_kind);
    r.read("lde_components", c.model.lde_components);
    r.read_enum("lde_aggregation", c.model.lde_aggregation, parse_aggregation);
    r.read("clamp_smoothing", c.model.clamp_smoothing);
    r.read("sap_hidden", c.model.sap_hidden);
  }
  if (const auto* l = root.child("loss")) {
    ObjectReader r(*l, "loss", errors,
                   {"kind", "margin", "anneal", "center_lambda", "center_alpha"});
    r.read_enum("kind", c.model.loss, parse_loss_kind);
    r.read("margin", c.model.margin.m);
    r.read("center_lambda", c.model.center_lambda);
    r.read("center_alpha", c.model.center_alpha);
    if (const auto* a = r.child("anneal")) {
      ObjectReader ar(*a, "loss.anneal", errors, {"enabled", "start", "decay", "floor"});
      ar.read("enabled", c.model.margin.anneal);
      ar.read("start", c.model.margin.anneal_start);
      ar.read("decay", c.model.margin.anneal_decay);
      ar.read("floor", c.model.margin.anneal_floor);
    }
  }
  if (const auto* t = root.child("train")) {
    ObjectReader r(*t, "train", errors,
                   {"batch_size", "momentum", "weight_decay", "lr_stages", "crop_range", "epochs",
                    "seed", "plateau_patience", "plateau_tolerance", "target_train_acc"});
    r.read("batch_size", c.train.batch_size);
    r.read("momentum", c.train.momentum);
    r.read("weight_decay", c.train.weight_decay);
    r.read("lr_stages", c.train.lr_stages);
    r.read("crop_range", c.train.crop_range);
    r.read("epochs", c.train.epochs);
    r.read("seed", c.train.seed);
    r.read("plateau_patience", c.train.plateau_patience);
    r.read("plateau_tolerance", c.train.plateau_tolerance);
    if (const auto* acc = r.child("target_train_acc")) {
      if (acc->is_null()) {
        c.train.target_train_acc.reset();
      } else if (acc->is_number()) {
        c.train.target_train_acc = acc->get<double>();
      } else {
        errors.push_back("train.target_train_acc has the wrong type");
      }
    }
  }
  if (const auto* m = root.child("metrics")) {
    ObjectReader r(*m, "metrics", errors, {"p_target", "c_miss", "c_fa"});
    r.read("p_target", c.metrics.p_target);
    r.read("c_miss", c.metrics.c_miss);
    r.read("c_fa", c.metrics.c_fa);
  }
  if (!errors.empty()) throw_all(errors);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

std::string fnv1a_hex(const void* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fnv1a_hex(const std::string& text) { return fnv1a_hex(text.data(), text.size()); }

}  // namespace uttenc
