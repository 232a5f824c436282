#include "config.hpp"

#include <fstream>
#include <set>

#include "wgmrf/errors.hpp"

namespace wgmrf::cli {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw InvalidArgument("config: '" + where + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw InvalidArgument("config: unknown key '" + key + "' in " + where);
}

template <class T>
void get(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument("config: wrong type for '" + std::string(key) + "' in " + where);
  }
}

}  // namespace

ModelKind parse_model(const std::string& name) {
  if (name == "iid") return ModelKind::iid;
  if (name == "lowrank") return ModelKind::lowrank;
  if (name == "wgmrf") return ModelKind::wgmrf;
  throw InvalidArgument("unknown model '" + name + "' (expected iid, lowrank or wgmrf)");
}

const char* model_name(ModelKind m) {
  switch (m) {
    case ModelKind::iid: return "iid";
    case ModelKind::lowrank: return "lowrank";
    case ModelKind::wgmrf: return "wgmrf";
  }
  return "?";
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  check_keys(j, "config", {"model", "seed", "schedule", "wgmrf", "lowrank", "iid", "cv"});
  if (j.contains("model")) {
    std::string m;
    get(j, "model", m, "config");
    c.model = parse_model(m);
  }
  if (j.contains("seed")) {
    std::uint64_t s = 0;
    get(j, "seed", s, "config");
    c.seed = s;
  }
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    check_keys(s, "schedule", {"iterations", "burn_in", "thin"});
    get(s, "iterations", c.iterations, "schedule");
    get(s, "burn_in", c.burn_in, "schedule");
    get(s, "thin", c.thin, "schedule");
  }
  if (j.contains("wgmrf")) {
    const json& w = j["wgmrf"];
    check_keys(w, "wgmrf", {"k_bound", "mu_prior_scale", "ig_shape", "ig_rate", "delta", "step_psi", "step_r",
                            "accept_low", "accept_high", "adapt_interval", "winding_init"});
    WgmrfConfig& g = c.wgmrf;
    get(w, "k_bound", g.k_bound, "wgmrf");
    get(w, "mu_prior_scale", g.mu_prior_scale, "wgmrf");
    get(w, "ig_shape", g.ig_shape, "wgmrf");
    get(w, "ig_rate", g.ig_rate, "wgmrf");
    get(w, "delta", g.delta, "wgmrf");
    get(w, "step_psi", g.step_psi, "wgmrf");
    get(w, "step_r", g.step_r, "wgmrf");
    get(w, "accept_low", g.accept_low, "wgmrf");
    get(w, "accept_high", g.accept_high, "wgmrf");
    get(w, "adapt_interval", g.adapt_interval, "wgmrf");
    if (w.contains("winding_init")) {
      std::string s;
      get(w, "winding_init", s, "wgmrf");
      if (s == "unwrap") g.winding_init = WindingInit::unwrap;
      else if (s == "zero") g.winding_init = WindingInit::zero;
      else throw InvalidArgument("config: winding_init must be 'unwrap' or 'zero'");
    }
  }
  if (j.contains("lowrank")) {
    const json& w = j["lowrank"];
    check_keys(w, "lowrank", {"knots", "k_bound", "mu_prior_scale", "sigma_shape", "sigma_rate", "tau_shape",
                              "tau_rate", "delta", "phi_fraction", "step_phi", "kmeans_restarts", "unwrap_init"});
    LowRankConfig& g = c.lowrank;
    get(w, "knots", g.knots, "lowrank");
    get(w, "k_bound", g.k_bound, "lowrank");
    get(w, "mu_prior_scale", g.mu_prior_scale, "lowrank");
    get(w, "sigma_shape", g.sigma_shape, "lowrank");
    get(w, "sigma_rate", g.sigma_rate, "lowrank");
    get(w, "tau_shape", g.tau_shape, "lowrank");
    get(w, "tau_rate", g.tau_rate, "lowrank");
    get(w, "delta", g.delta, "lowrank");
    get(w, "phi_fraction", g.phi_fraction, "lowrank");
    get(w, "step_phi", g.step_phi, "lowrank");
    get(w, "kmeans_restarts", g.kmeans_restarts, "lowrank");
    get(w, "unwrap_init", g.unwrap_init, "lowrank");
  }
  if (j.contains("iid")) {
    const json& w = j["iid"];
    check_keys(w, "iid", {"k_bound", "mu_prior_scale", "ig_shape", "ig_rate"});
    get(w, "k_bound", c.iid.k_bound, "iid");
    get(w, "mu_prior_scale", c.iid.mu_prior_scale, "iid");
    get(w, "ig_shape", c.iid.ig_shape, "iid");
    get(w, "ig_rate", c.iid.ig_rate, "iid");
  }
  if (j.contains("cv")) {
    const json& w = j["cv"];
    check_keys(w, "cv", {"folds", "block_rows", "block_cols"});
    get(w, "folds", c.folds, "cv");
    get(w, "block_rows", c.block_rows, "cv");
    get(w, "block_cols", c.block_cols, "cv");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return config_from_json(j);
}

void RunConfig::finalize() {
  if (!seed) throw InvalidArgument("a seed is required (--seed or \"seed\" in the config)");
  for (int* it : {&wgmrf.iterations, &lowrank.iterations, &iid.iterations}) *it = iterations;
  for (int* b : {&wgmrf.burn_in, &lowrank.burn_in, &iid.burn_in}) *b = burn_in;
  for (int* t : {&wgmrf.thin, &lowrank.thin, &iid.thin}) *t = thin;
  wgmrf.seed = lowrank.seed = iid.seed = *seed;
  if (iterations < 1 || burn_in < 0 || burn_in >= iterations || thin < 1)
    throw InvalidArgument("schedule needs iterations > burn_in >= 0 and thin >= 1");
  if (folds < 2) throw InvalidArgument("cv needs at least 2 folds");
  if (block_rows < 1 || block_cols < 1) throw InvalidArgument("cv block grid dimensions must be >= 1");
}

nlohmann::json RunConfig::to_json() const {
  json j;
  j["model"] = model_name(model);
  j["seed"] = seed ? json(*seed) : json(nullptr);
  j["schedule"] = {{"iterations", iterations}, {"burn_in", burn_in}, {"thin", thin}};
  j["wgmrf"] = {{"k_bound", wgmrf.k_bound},
                {"mu_prior_scale", wgmrf.mu_prior_scale},
                {"ig_shape", wgmrf.ig_shape},
                {"ig_rate", wgmrf.ig_rate},
                {"delta", wgmrf.delta},
                {"step_psi", wgmrf.step_psi},
                {"step_r", wgmrf.step_r},
                {"accept_low", wgmrf.accept_low},
                {"accept_high", wgmrf.accept_high},
                {"adapt_interval", wgmrf.adapt_interval},
                {"winding_init", wgmrf.winding_init == WindingInit::unwrap ? "unwrap" : "zero"}};
  j["lowrank"] = {{"knots", lowrank.knots},
                  {"k_bound", lowrank.k_bound},
                  {"mu_prior_scale", lowrank.mu_prior_scale},
                  {"sigma_shape", lowrank.sigma_shape},
                  {"sigma_rate", lowrank.sigma_rate},
                  {"tau_shape", lowrank.tau_shape},
                  {"tau_rate", lowrank.tau_rate},
                  {"delta", lowrank.delta},
                  {"phi_fraction", lowrank.phi_fraction},
                  {"step_phi", lowrank.step_phi},
                  {"kmeans_restarts", lowrank.kmeans_restarts},
                  {"unwrap_init", lowrank.unwrap_init}};
  j["iid"] = {{"k_bound", iid.k_bound},
              {"mu_prior_scale", iid.mu_prior_scale},
              {"ig_shape", iid.ig_shape},
              {"ig_rate", iid.ig_rate}};
  j["cv"] = {{"folds", folds}, {"block_rows", block_rows}, {"block_cols", block_cols}};
  return j;
}

}  // namespace wgmrf::cli
