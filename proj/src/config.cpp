#include "ibpa/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <stdexcept>
#include <utility>

#include "ibpa/errors.hpp"
#include "ibpa/random.hpp"

namespace ibpa {

namespace {

template <typename E>
using EnumNames = std::initializer_list<std::pair<E, const char*>>;

template <typename E>
void enum_to_json(nlohmann::json& j, E value, EnumNames<E> names) {
  for (const auto& [v, name] : names) {
    if (v == value) {
      j = name;
      return;
    }
  }
  throw std::invalid_argument("enum value has no name");
}

template <typename E>
void enum_from_json(const nlohmann::json& j, E& value, EnumNames<E> names, const char* what) {
  const auto text = j.get<std::string>();
  for (const auto& [v, name] : names) {
    if (text == name) {
      value = v;
      return;
    }
  }
  std::string allowed;
  for (const auto& [v, name] : names) allowed += std::string(allowed.empty() ? "" : ", ") + name;
  throw std::invalid_argument("unknown " + std::string(what) + " '" + text + "' (expected one of: " + allowed + ")");
}

const EnumNames<AttentionMode> kModeNames{{AttentionMode::AsWritten, "as-written"},
                                          {AttentionMode::Proportional, "proportional"}};
const EnumNames<AttentionPairing> kPairingNames{{AttentionPairing::Nearest, "nearest"},
                                                {AttentionPairing::AllPairsMean, "all-pairs-mean"}};
const EnumNames<DistanceAggregation> kAggregationNames{{DistanceAggregation::Min, "min"},
                                                       {DistanceAggregation::Mean, "mean"}};
const EnumNames<InitDistribution> kInitNames{{InitDistribution::Uniform, "uniform"},
                                             {InitDistribution::Normal, "normal"}};
const EnumNames<Ablation> kAblationNames{
    {Ablation::Full, "full"}, {Ablation::Baseline1, "baseline1"}, {Ablation::Baseline2, "baseline2"}};

}  // namespace

void to_json(nlohmann::json& j, const AttentionMode& e) { enum_to_json(j, e, kModeNames); }
void from_json(const nlohmann::json& j, AttentionMode& e) { enum_from_json(j, e, kModeNames, "attention mode"); }
void to_json(nlohmann::json& j, const AttentionPairing& e) { enum_to_json(j, e, kPairingNames); }
void from_json(const nlohmann::json& j, AttentionPairing& e) { enum_from_json(j, e, kPairingNames, "pairing"); }
void to_json(nlohmann::json& j, const DistanceAggregation& e) { enum_to_json(j, e, kAggregationNames); }
void from_json(const nlohmann::json& j, DistanceAggregation& e) {
  enum_from_json(j, e, kAggregationNames, "aggregation");
}
void to_json(nlohmann::json& j, const InitDistribution& e) { enum_to_json(j, e, kInitNames); }
void from_json(const nlohmann::json& j, InitDistribution& e) { enum_from_json(j, e, kInitNames, "init"); }
void to_json(nlohmann::json& j, const Ablation& e) { enum_to_json(j, e, kAblationNames); }
void from_json(const nlohmann::json& j, Ablation& e) { enum_from_json(j, e, kAblationNames, "ablation"); }

namespace {

nlohmann::json feature_json(const PipelineConfig& c) {
  return {
      {"interp_max_gap", c.interp_max_gap},
      {"track_iou", c.track_iou},
      {"segment_length", c.segment_length},
      {"segments", c.segments},
      {"patch_size", c.patch_size},
      {"per_frame_patches", c.per_frame_patches},
      {"attention",
       {{"S", c.attention.scale},
        {"eps", c.attention.eps},
        {"cap", c.attention.cap},
        {"mode", c.attention.mode},
        {"pairing", c.pairing},
        {"aggregation", c.aggregation}}},
      {"codebook_size", c.codebook_size},
      {"kmeans_max_iter", c.kmeans_max_iter},
      {"psi", c.cooc.psi},
      {"cooc_eps", c.cooc.eps},
      {"persons", c.persons},
      {"ablation", c.ablation},
  };
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("unknown config key '" + where + key + "'");
  }
}

}  // namespace

void PipelineConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid config: ") + what);
  };
  require(interp_max_gap >= 1, "interp_max_gap must be >= 1");
  require(track_iou > 0.0 && track_iou <= 1.0, "track_iou must be in (0, 1]");
  require(segment_length >= 1, "segment_length must be >= 1");
  require(segments >= 1, "segments must be >= 1");
  require(patch_size >= 2 && patch_size % 2 == 0, "patch_size must be even and >= 2");
  require(embedding_dim >= 1, "embedding_dim must be >= 1");
  require(attention.scale > 0.0, "attention.S must be positive");
  require(attention.eps > 0.0, "attention.eps must be positive");
  require(attention.cap > 0.0, "attention.cap must be positive");
  require(codebook_size >= 2, "codebook_size must be >= 2");
  require(kmeans_max_iter >= 1, "kmeans_max_iter must be >= 1");
  require(cooc.psi > 0.0, "psi must be positive");
  require(cooc.eps > 0.0, "cooc_eps must be positive");
  require(persons >= 1, "persons must be >= 1");
  require(sub_hidden >= 1 && fusion_hidden >= 1, "hidden sizes must be >= 1");
  require(init_range > 0.0 && init_stddev > 0.0, "init scale must be positive");
  require(adam.learning_rate > 0.0, "learning_rate must be positive");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0,
          "Adam betas must be in [0, 1)");
  require(adam.eps > 0.0, "adam_eps must be positive");
  require(l2 >= 0.0, "l2 must be non-negative");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(threads >= 1, "threads must be >= 1");
}

PipelineConfig PipelineConfig::desk_profile() {
  PipelineConfig c;
  c.sub_hidden = 16;
  c.fusion_hidden = 32;
  c.embedding_dim = 16;
  c.codebook_size = 8;
  c.segments = 10;
  c.segment_length = 5;
  c.interp_max_gap = 5;
  c.adam.learning_rate = 5e-3;
  c.epochs = 40;
  return c;
}

std::uint64_t PipelineConfig::feature_hash() const { return fnv1a64(feature_json(*this).dump()); }

std::uint64_t PipelineConfig::hash() const { return fnv1a64(nlohmann::json(*this).dump()); }

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = feature_json(c);
  j["embedding_dim"] = c.embedding_dim;
  j["model"] = {{"sub_hidden", c.sub_hidden},
                {"fusion_hidden", c.fusion_hidden},
                {"shared_sub", c.shared_sub},
                {"init", c.init},
                {"init_range", c.init_range},
                {"init_stddev", c.init_stddev}};
  j["train"] = {{"learning_rate", c.adam.learning_rate},
                {"beta1", c.adam.beta1},
                {"beta2", c.adam.beta2},
                {"adam_eps", c.adam.eps},
                {"l2", c.l2},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"standardize", c.standardize}};
  j["seed"] = c.seed;
  j["threads"] = c.threads;
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  reject_unknown(j,
                 {"interp_max_gap", "track_iou", "segment_length", "segments", "patch_size",
                  "per_frame_patches", "attention", "codebook_size", "kmeans_max_iter", "psi", "cooc_eps",
                  "persons", "ablation", "embedding_dim", "model", "train", "seed", "threads"},
                 "");
  read_if(j, "interp_max_gap", c.interp_max_gap);
  read_if(j, "track_iou", c.track_iou);
  read_if(j, "segment_length", c.segment_length);
  read_if(j, "segments", c.segments);
  read_if(j, "patch_size", c.patch_size);
  read_if(j, "per_frame_patches", c.per_frame_patches);
  read_if(j, "codebook_size", c.codebook_size);
  read_if(j, "kmeans_max_iter", c.kmeans_max_iter);
  read_if(j, "psi", c.cooc.psi);
  read_if(j, "cooc_eps", c.cooc.eps);
  read_if(j, "persons", c.persons);
  read_if(j, "ablation", c.ablation);
  read_if(j, "embedding_dim", c.embedding_dim);
  read_if(j, "seed", c.seed);
  read_if(j, "threads", c.threads);
  if (auto it = j.find("attention"); it != j.end()) {
    reject_unknown(*it, {"S", "eps", "cap", "mode", "pairing", "aggregation"}, "attention.");
    read_if(*it, "S", c.attention.scale);
    read_if(*it, "eps", c.attention.eps);
    read_if(*it, "cap", c.attention.cap);
    read_if(*it, "mode", c.attention.mode);
    read_if(*it, "pairing", c.pairing);
    read_if(*it, "aggregation", c.aggregation);
  }
  if (auto it = j.find("model"); it != j.end()) {
    reject_unknown(*it, {"sub_hidden", "fusion_hidden", "shared_sub", "init", "init_range", "init_stddev"},
                   "model.");
    read_if(*it, "sub_hidden", c.sub_hidden);
    read_if(*it, "fusion_hidden", c.fusion_hidden);
    read_if(*it, "shared_sub", c.shared_sub);
    read_if(*it, "init", c.init);
    read_if(*it, "init_range", c.init_range);
    read_if(*it, "init_stddev", c.init_stddev);
  }
  if (auto it = j.find("train"); it != j.end()) {
    reject_unknown(*it, {"learning_rate", "beta1", "beta2", "adam_eps", "l2", "batch_size", "epochs", "standardize"},
                   "train.");
    read_if(*it, "learning_rate", c.adam.learning_rate);
    read_if(*it, "beta1", c.adam.beta1);
    read_if(*it, "beta2", c.adam.beta2);
    read_if(*it, "adam_eps", c.adam.eps);
    read_if(*it, "l2", c.l2);
    read_if(*it, "batch_size", c.batch_size);
    read_if(*it, "epochs", c.epochs);
    read_if(*it, "standardize", c.standardize);
  }
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  try {
    PipelineConfig c = nlohmann::json::parse(in).get<PipelineConfig>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace ibpa
