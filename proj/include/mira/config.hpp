// Run configuration: every training hyperparameter with its default, plus a
// flat key=value config-file reader. CLI flags are applied on top of file
// values by the tool, so the precedence is defaults < file < flags.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "mira/mirror.hpp"
#include "mira/network.hpp"
#include "mira/numerics.hpp"

namespace mira {

/// User-input problems: bad config keys or values, unreadable files.
/// The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class MirrorLayers { f, g, both };
enum class MirrorPool { batch, full };
enum class AnchorMode { mixed, per_domain };

struct RunConfig {
  std::size_t k = 3;
  double gamma = 1.0;
  DistanceKind distance = DistanceKind::euclidean();
  WeightKind weighting = WeightKind::uniform;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  LrSchedule lr;  // eta0 = 0.001, alpha = 10, beta = 0.75
  std::uint64_t seed = 0;
  MirrorLayers mirror_layers = MirrorLayers::both;
  MirrorPool mirror_pool = MirrorPool::batch;
  std::size_t d_f = 16;
  std::size_t d_g = 8;
  std::size_t d_hidden = 32;
  std::size_t backbone_layers = 2;
  std::size_t kmeans_max_iters = 100;
  double kmeans_tol = 1e-6;
  bool symmetric_kl = false;
  AnchorMode anchor_mode = AnchorMode::mixed;
  double momentum = 0.0;
  double weight_decay = 0.0;
  double head_lr_multiplier = 10.0;
};

inline void validate_config(const RunConfig& c) {
  if (c.k < 1) throw ConfigError("config: k must be >= 1");
  if (c.gamma < 0.0) throw ConfigError("config: gamma must be >= 0");
  if (c.batch_size < 2) throw ConfigError("config: batch_size must be >= 2");
  if (!(c.lr.eta0 > 0.0)) throw ConfigError("config: eta0 must be > 0");
  if (c.lr.alpha < 0.0 || c.lr.beta < 0.0)
    throw ConfigError("config: alpha and beta must be >= 0");
  if (c.d_f < 1 || c.d_g < 1 || c.d_hidden < 1)
    throw ConfigError("config: layer widths must be >= 1");
  if (c.backbone_layers < 1 || c.backbone_layers > 2)
    throw ConfigError("config: backbone_layers must be 1 or 2");
  if (c.kmeans_max_iters < 1) throw ConfigError("config: kmeans_max_iters must be >= 1");
  if (!(c.kmeans_tol >= 0.0)) throw ConfigError("config: kmeans_tol must be >= 0");
  if (c.distance.kind == DistanceKind::Kind::gaussian && !(c.distance.sigma > 0.0))
    throw ConfigError("config: sigma must be > 0 for the gaussian distance");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0))
    throw ConfigError("config: momentum must be in [0, 1)");
  if (c.weight_decay < 0.0) throw ConfigError("config: weight_decay must be >= 0");
  if (!(c.head_lr_multiplier > 0.0))
    throw ConfigError("config: head_lr_multiplier must be > 0");
}

namespace detail {

template <typename T>
inline T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T out;
  if (!(is >> out) || !(is >> std::ws).eof())
    throw ConfigError("config: bad value for " + key + ": '" + value + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + value + "'");
}

}  // namespace detail

/// Apply one key=value pair. Throws ConfigError for unknown keys or
/// unparsable values.
inline void apply_config_entry(RunConfig& c, const std::string& key,
                               const std::string& value) {
  using detail::parse_bool;
  using detail::parse_number;
  if (key == "k") c.k = parse_number<std::size_t>(key, value);
  else if (key == "gamma") c.gamma = parse_number<double>(key, value);
  else if (key == "distance") {
    if (value == "euclidean") c.distance.kind = DistanceKind::Kind::euclidean;
    else if (value == "gaussian") c.distance.kind = DistanceKind::Kind::gaussian;
    else throw ConfigError("config: distance must be euclidean or gaussian");
  } else if (key == "sigma") c.distance.sigma = parse_number<double>(key, value);
  else if (key == "weighting") {
    if (value == "uniform") c.weighting = WeightKind::uniform;
    else if (value == "inverse_distance") c.weighting = WeightKind::inverse_distance;
    else throw ConfigError("config: weighting must be uniform or inverse_distance");
  } else if (key == "epochs") c.epochs = parse_number<std::size_t>(key, value);
  else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "eta0") c.lr.eta0 = parse_number<double>(key, value);
  else if (key == "alpha") c.lr.alpha = parse_number<double>(key, value);
  else if (key == "beta") c.lr.beta = parse_number<double>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "mirror_layers") {
    if (value == "f") c.mirror_layers = MirrorLayers::f;
    else if (value == "g") c.mirror_layers = MirrorLayers::g;
    else if (value == "both") c.mirror_layers = MirrorLayers::both;
    else throw ConfigError("config: mirror_layers must be f, g or both");
  } else if (key == "mirror_pool") {
    if (value == "batch") c.mirror_pool = MirrorPool::batch;
    else if (value == "full") c.mirror_pool = MirrorPool::full;
    else throw ConfigError("config: mirror_pool must be batch or full");
  } else if (key == "d_f") c.d_f = parse_number<std::size_t>(key, value);
  else if (key == "d_g") c.d_g = parse_number<std::size_t>(key, value);
  else if (key == "d_hidden") c.d_hidden = parse_number<std::size_t>(key, value);
  else if (key == "backbone_layers") c.backbone_layers = parse_number<std::size_t>(key, value);
  else if (key == "kmeans_max_iters") c.kmeans_max_iters = parse_number<std::size_t>(key, value);
  else if (key == "kmeans_tol") c.kmeans_tol = parse_number<double>(key, value);
  else if (key == "symmetric_kl") c.symmetric_kl = parse_bool(key, value);
  else if (key == "anchor_mode") {
    if (value == "mixed") c.anchor_mode = AnchorMode::mixed;
    else if (value == "per_domain") c.anchor_mode = AnchorMode::per_domain;
    else throw ConfigError("config: anchor_mode must be mixed or per_domain");
  } else if (key == "momentum") c.momentum = parse_number<double>(key, value);
  else if (key == "weight_decay") c.weight_decay = parse_number<double>(key, value);
  else if (key == "head_lr_multiplier") c.head_lr_multiplier = parse_number<double>(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

/// Flat key=value file; blank lines and lines starting with '#' are ignored.
inline void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: missing '=' at " + path + ":" + std::to_string(lineno));
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    apply_config_entry(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

inline const char* to_string(MirrorLayers m) {
  switch (m) {
    case MirrorLayers::f: return "f";
    case MirrorLayers::g: return "g";
    default: return "both";
  }
}
inline const char* to_string(MirrorPool p) {
  return p == MirrorPool::batch ? "batch" : "full";
}
inline const char* to_string(AnchorMode a) {
  return a == AnchorMode::mixed ? "mixed" : "per_domain";
}

}  // namespace mira
