#include "gotham/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gotham {

namespace {

using nlohmann::ordered_json;

// Visits every (key, field) pair; `enum_field` receives to/from string converters.
template <typename Cfg, typename Plain, typename Enum>
void visit_fields(Cfg& c, Plain&& plain, Enum&& enum_field) {
  plain("dataset", c.dataset);
  plain("out", c.out);
  enum_field("mode", c.mode, prototype_mode_from_string);
  enum_field("backbone", c.backbone, backbone_from_string);
  enum_field("unseen_encoder", c.unseen_encoder, unseen_encoder_from_string);
  enum_field("cluster_variant", c.cluster_variant, cluster_variant_from_string);
  enum_field("episode_class_pool", c.episode_class_pool, class_pool_from_string);
  plain("n_way", c.n_way);
  plain("k_shot", c.k_shot);
  plain("walk_length", c.walk_length);
  plain("walks_per_seed", c.walks_per_seed);
  plain("query_per_class", c.query_per_class);
  plain("eval_per_class", c.eval_per_class);
  plain("alpha1", c.weights.alpha1);
  plain("alpha2", c.weights.alpha2);
  plain("alpha3", c.weights.alpha3);
  plain("alpha4", c.weights.alpha4);
  plain("lambda1", c.weights.lambda1);
  plain("lambda2", c.weights.lambda2);
  plain("gamma", c.weights.gamma);
  plain("epsilon_log", c.weights.epsilon_log);
  plain("meta_lr", c.meta_lr);
  plain("ft_lr", c.ft_lr);
  plain("weight_decay", c.weight_decay);
  plain("episodes_base", c.episodes_base);
  plain("episodes_finetune", c.episodes_finetune);
  plain("gnn_layers", c.gnn_layers);
  plain("hidden_dim", c.hidden_dim);
  plain("out_dim", c.out_dim);
  plain("mlp_hidden", c.mlp_hidden);
  plain("slope", c.slope);
  plain("seed", c.seed);
  plain("save_checkpoints", c.save_checkpoints);
}

}  // namespace

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("config: " + msg);
  };
  need(n_way >= 0, "n_way must be >= 0");
  need(k_shot >= 1, "k_shot must be >= 1");
  need(walk_length >= 0, "walk_length must be >= 0");
  need(walks_per_seed >= 0, "walks_per_seed must be >= 0");
  need(query_per_class >= 0, "query_per_class must be >= 0");
  need(eval_per_class >= 0, "eval_per_class must be >= 0");
  need(meta_lr >= 0 && ft_lr >= 0, "learning rates must be >= 0");
  need(weight_decay >= 0, "weight_decay must be >= 0");
  need(episodes_base >= 0 && episodes_finetune >= 0, "episode counts must be >= 0");
  need(gnn_layers >= 1, "gnn_layers must be >= 1");
  need(hidden_dim >= 1 && out_dim >= 1 && mlp_hidden >= 0, "layer widths must be positive");
  need(slope > 0 && slope <= 1, "slope must lie in (0, 1]");
  weights.validate();
}

EpisodeConfig RunConfig::episode_config() const {
  EpisodeConfig e;
  e.n_way = n_way;
  e.query_per_class = query_per_class;
  e.walk = {walk_length, walks_per_seed};
  e.pool = episode_class_pool;
  return e;
}

ModelSpec RunConfig::model_spec(std::size_t feature_dim, std::size_t csd_dim) const {
  ModelSpec s;
  s.feature_dim = feature_dim;
  s.csd_dim = csd_dim;
  s.gnn_widths.assign(gnn_layers - 1, hidden_dim);
  s.gnn_widths.push_back(out_dim);
  s.mlp_hidden.clear();
  if (mlp_hidden > 0) s.mlp_hidden.push_back(mlp_hidden);
  s.slope = slope;
  s.backbone = backbone;
  s.seed = seed;
  return s;
}

std::string config_to_json(const RunConfig& cfg) {
  ordered_json j;
  visit_fields(
      cfg, [&](const char* key, const auto& v) { j[key] = v; },
      [&](const char* key, const auto& v, auto) { j[key] = to_string(v); });
  return j.dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text, RunConfig base) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config: top level must be a JSON object");
  std::size_t known = 0;
  visit_fields(
      base,
      [&](const char* key, auto& field) {
        auto it = j.find(key);
        if (it == j.end()) return;
        ++known;
        try {
          using T = std::decay_t<decltype(field)>;
          if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
            if (!it->is_number_integer()) throw ValidationError("");
            if (std::is_unsigned_v<T> && !it->is_number_unsigned()) throw ValidationError("");
          }
          field = it->template get<std::decay_t<decltype(field)>>();
        } catch (const std::exception&) {
          throw ValidationError(std::string("config: key '") + key + "' has the wrong type");
        }
      },
      [&](const char* key, auto& field, auto parse) {
        auto it = j.find(key);
        if (it == j.end()) return;
        ++known;
        if (!it->is_string()) throw ValidationError(std::string("config: key '") + key + "' must be a string");
        field = parse(it->template get<std::string>());
      });
  if (known != j.size()) {
    RunConfig probe;
    std::vector<std::string> names;
    visit_fields(
        probe, [&](const char* key, auto&) { names.emplace_back(key); },
        [&](const char* key, auto&, auto) { names.emplace_back(key); });
    for (const auto& item : j.items())
      if (std::find(names.begin(), names.end(), item.key()) == names.end())
        throw ValidationError("config: unknown key '" + item.key() + "'");
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << config_to_json(cfg);
}

}  // namespace gotham
