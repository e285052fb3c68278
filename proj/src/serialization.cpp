#include "latentguard/serialization.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace latentguard {

namespace {

std::string role_name(FeatureRole role) {
  return role == FeatureRole::kUser ? "user" : "ad";
}

FeatureRole role_from_name(const std::string& name) {
  if (name == "user") return FeatureRole::kUser;
  if (name == "ad") return FeatureRole::kAd;
  throw InvalidInputError("unknown feature role '" + name + "'");
}

Json id_pair(const FeatureValueId& id) { return Json::array({id.type, id.value}); }

// Reads a JSON object field by field and rejects anything left unread.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(field(key) + ": wrong type");
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string field(const char* key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) {
        throw ConfigError((path_.empty() ? key : path_ + "." + key) +
                          ": unknown key");
      }
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
void check_field(const std::string& field, F&& fn) {
  try {
    fn();
  } catch (const InvalidInputError& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

}  // namespace

// ---- events -------------------------------------------------------------

Json event_to_json(const TrainingEvent& event) {
  Json user = Json::array();
  for (const auto& id : event.user_features) user.push_back(id_pair(id));
  Json ad = Json::array();
  for (const auto& id : event.ad_features) ad.push_back(id_pair(id));
  Json j = {{"v", kEventSchemaVersion},
            {"ts", event.timestamp},
            {"user", user},
            {"ad", ad},
            {"y", event.label}};
  if (event.cost) j["cost"] = *event.cost;
  return j;
}

TrainingEvent event_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidInputError("event: expected an object");
  if (j.value("v", std::string()) != kEventSchemaVersion) {
    throw InvalidInputError("event: unsupported schema version");
  }
  TrainingEvent ev;
  try {
    for (const auto& p : j.at("user")) {
      ev.user_features.push_back(FeatureValueId::user(
          p.at(0).get<int>(), p.at(1).get<std::uint64_t>()));
    }
    for (const auto& p : j.at("ad")) {
      ev.ad_features.push_back(FeatureValueId::ad(
          p.at(0).get<int>(), p.at(1).get<std::uint64_t>()));
    }
    ev.label = j.at("y").get<int>();
    ev.timestamp = j.at("ts").get<double>();
    if (j.contains("cost")) ev.cost = j.at("cost").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("event: ") + e.what());
  }
  if (ev.label != 0 && ev.label != 1) {
    throw InvalidInputError("event: label must be 0 or 1");
  }
  if (ev.cost && (ev.label != 1 || !(*ev.cost >= 0.0))) {
    throw InvalidInputError("event: cost only allowed on clicks, nonnegative");
  }
  return ev;
}

void write_event_line(std::ostream& out, const TrainingEvent& event) {
  out << event_to_json(event).dump() << '\n';
}

void write_event_log(const std::filesystem::path& path,
                     std::span<const TrainingEvent> events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& e : events) write_event_line(out, e);
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<TrainingEvent> read_event_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<TrainingEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      events.push_back(event_from_json(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInputError(path.string() + ":" + std::to_string(line_no) +
                              ": " + e.what());
    } catch (const InvalidInputError& e) {
      throw InvalidInputError(path.string() + ":" + std::to_string(line_no) +
                              ": " + e.what());
    }
  }
  return events;
}

// ---- snapshots ----------------------------------------------------------

Json snapshot_to_json(const InstanceState& state) {
  const FeatureConfig& cfg = state.model.config;
  Json vectors = Json::array();
  for (const FeatureValueId& id : sorted_keys(state.model.vectors)) {
    const LatentVector& lv = state.model.vectors.at(id);
    Json v = {{"role", role_name(id.role)},
              {"type", id.type},
              {"value", id.value},
              {"values", lv.values},
              {"update_count", lv.update_count},
              {"last_seen", lv.last_seen}};
    if (auto it = state.adagrad.accumulators.find(id);
        it != state.adagrad.accumulators.end()) {
      v["accumulator"] = it->second;
    }
    if (state.dual) {
      if (auto it = state.dual->mu.find(id); it != state.dual->mu.end()) {
        v["mu"] = it->second;
      }
    }
    vectors.push_back(std::move(v));
  }
  Json j = {{"format_version", kSnapshotFormatVersion},
            {"features",
             {{"K", cfg.num_user_features()},
              {"o", cfg.pair_entries()},
              {"s", cfg.single_entries()},
              {"ad_feature_types", cfg.ad_feature_types()}}},
            {"bias", state.model.bias},
            {"bias_accumulator", state.adagrad.bias},
            {"vectors", std::move(vectors)}};
  if (state.dual) {
    j["dual"] = {{"mode", to_string(state.dual->mode)},
                 {"rho", state.dual->rho},
                 {"beta_dual", state.dual->beta_dual},
                 {"naive_factor", state.dual->naive_factor}};
  } else {
    j["dual"] = nullptr;
  }
  return j;
}

InstanceState snapshot_from_json(const Json& j) {
  try {
    if (j.at("format_version").get<std::string>() != kSnapshotFormatVersion) {
      throw InvalidInputError("snapshot: unsupported format_version");
    }
    const Json& f = j.at("features");
    InstanceState state(FeatureConfig(
        f.at("K").get<int>(), f.at("o").get<int>(), f.at("s").get<int>(),
        f.at("ad_feature_types").get<std::vector<std::string>>()));
    state.model.bias = j.at("bias").get<double>();
    state.adagrad.bias = j.at("bias_accumulator").get<double>();
    const Json& dual = j.at("dual");
    if (!dual.is_null()) {
      DualState ds;
      const auto mode = dual.at("mode").get<std::string>();
      if (mode == "entropic") {
        ds.mode = DualMode::kEntropic;
      } else if (mode == "euclidean") {
        ds.mode = DualMode::kEuclidean;
      } else if (mode == "naive") {
        ds.mode = DualMode::kNaive;
      } else {
        throw InvalidInputError("snapshot: unknown dual mode '" + mode + "'");
      }
      ds.rho = dual.at("rho").get<double>();
      ds.beta_dual = dual.at("beta_dual").get<double>();
      ds.naive_factor = dual.at("naive_factor").get<double>();
      state.dual = std::move(ds);
    }
    for (const auto& v : j.at("vectors")) {
      const FeatureValueId id{role_from_name(v.at("role").get<std::string>()),
                              v.at("type").get<std::uint16_t>(),
                              v.at("value").get<std::uint64_t>()};
      LatentVector lv;
      lv.values = v.at("values").get<Vector>();
      lv.update_count = v.at("update_count").get<std::uint64_t>();
      lv.last_seen = v.at("last_seen").get<double>();
      if (lv.values.size() != state.model.length_for(id)) {
        throw InvalidInputError("snapshot: vector " + to_string(id) +
                                " has the wrong length");
      }
      if (v.contains("accumulator")) {
        auto acc = v.at("accumulator").get<Vector>();
        if (acc.size() != lv.values.size()) {
          throw InvalidInputError("snapshot: accumulator length mismatch");
        }
        state.adagrad.accumulators.emplace(id, std::move(acc));
      }
      if (v.contains("mu")) {
        if (!state.dual) {
          throw InvalidInputError("snapshot: mu present without dual state");
        }
        state.dual->mu.emplace(id, v.at("mu").get<double>());
      }
      if (!state.model.vectors.emplace(id, std::move(lv)).second) {
        throw InvalidInputError("snapshot: duplicate vector " + to_string(id));
      }
    }
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("snapshot: ") + e.what());
  }
}

std::string snapshot_to_string(const InstanceState& state) {
  return snapshot_to_json(state).dump(1) + "\n";
}

void save_snapshot(const std::filesystem::path& path,
                   const InstanceState& state) {
  write_text_file(path, snapshot_to_string(state));
}

InstanceState load_snapshot(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return snapshot_from_json(Json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(path.string() + ": " + e.what());
  }
}

// ---- configuration ------------------------------------------------------

void ExperimentConfig::validate() const {
  check_field("market", [&] { market.validate(); });
  check_field("features", [&] { (void)market.feature_config(); });
  check_field("lifecycle", [&] { lifecycle.validate(); });
  check_field("hyperparams", [&] { hyperparams.validate(); });
  if (instances < 1) throw ConfigError("instances: must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("tau: must be > 0");
  if (n_cycles < 1) throw ConfigError("n_cycles: must be >= 1");
  if (chunk_size < 1) throw ConfigError("chunk_size: must be >= 1");
  if (tuning.strategy == TuningStrategy::kGrid) {
    if (!(tuning.eta0_min > 0.0) || !(tuning.eta0_max >= tuning.eta0_min)) {
      throw ConfigError("tuning: need 0 < eta0_min <= eta0_max");
    }
  } else {
    if (tuning.factors.empty()) throw ConfigError("tuning.factors: empty");
    for (double f : tuning.factors) {
      if (!(f > 0.0)) throw ConfigError("tuning.factors: must be > 0");
    }
  }
}

ExperimentSettings ExperimentConfig::settings() const {
  ExperimentSettings s;
  s.n_cycles = n_cycles;
  s.chunk_size = chunk_size;
  s.training.lifecycle = lifecycle;
  s.training.tau = tau;
  s.tuning = tuning.strategy;
  s.perturbation.count = instances;
  s.perturbation.factors = tuning.factors;
  s.seed = seed;
  return s;
}

std::vector<InstanceSpec> ExperimentConfig::initial_specs() const {
  if (tuning.strategy == TuningStrategy::kGrid) {
    return eta0_grid(hyperparams, mode, instances, tuning.eta0_min,
                     tuning.eta0_max);
  }
  InstanceSpec incumbent{0, hyperparams, mode};
  Rng rng(mix_seed(seed, 0xfeedULL));
  PerturbationConfig p{instances, tuning.factors};
  return perturb_hyperparams(incumbent, rng, p);
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig cfg;
  StrictObject root(j, "");
  root.read("seed", cfg.seed);
  root.read("instances", cfg.instances);
  root.read("tau", cfg.tau);
  root.read("n_cycles", cfg.n_cycles);
  root.read("chunk_size", cfg.chunk_size);
  root.read("output_dir", cfg.output_dir);
  std::string mode = to_string(cfg.mode);
  root.read("mode", mode);
  check_field("mode", [&] { cfg.mode = training_mode_from_string(mode); });

  MarketConfig& m = cfg.market;
  if (const Json* f = root.child("features")) {
    StrictObject obj(*f, "features");
    obj.read("K", m.num_user_features);
    obj.read("o", m.pair_entries);
    obj.read("s", m.single_entries);
    obj.finish();
  }
  if (const Json* mk = root.child("market")) {
    StrictObject obj(*mk, "market");
    obj.read("user_cardinalities", m.user_cardinalities);
    obj.read("user_zipf", m.user_zipf);
    obj.read("initial_ads", m.initial_ads);
    obj.read("ad_arrival_rate", m.ad_arrival_rate);
    obj.read("ad_mean_lifetime", m.ad_mean_lifetime);
    obj.read("pause_prob", m.pause_prob);
    obj.read("resume_prob", m.resume_prob);
    obj.read("advertisers", m.advertisers);
    obj.read("campaigns_per_advertiser", m.campaigns_per_advertiser);
    obj.read("truth_scale", m.truth_scale);
    obj.read("truth_drift", m.truth_drift);
    obj.read("truth_bias", m.truth_bias);
    obj.read("cost_rate", m.cost_rate);
    obj.read("cycle_seconds", m.cycle_seconds);
    obj.finish();
  }
  if (const Json* lc = root.child("lifecycle")) {
    StrictObject obj(*lc, "lifecycle");
    obj.read("sigma_init", cfg.lifecycle.sigma_init);
    obj.read("evict_after", cfg.lifecycle.evict_after);
    obj.finish();
  }
  if (const Json* hpj = root.child("hyperparams")) {
    StrictObject obj(*hpj, "hyperparams");
    HyperParams& hp = cfg.hyperparams;
    obj.read("eta0", hp.eta0);
    obj.read("alpha", hp.alpha);
    obj.read("beta_ada", hp.beta_ada);
    obj.read("lambda", hp.lambda);
    obj.read("beta_dual", hp.beta_dual);
    obj.read("k_rho", hp.k_rho);
    obj.read("naive_factor", hp.naive_factor);
    obj.finish();
  }
  if (const Json* t = root.child("tuning")) {
    StrictObject obj(*t, "tuning");
    std::string strategy = "grid";
    obj.read("strategy", strategy);
    if (strategy == "grid") {
      cfg.tuning.strategy = TuningStrategy::kGrid;
    } else if (strategy == "perturb") {
      cfg.tuning.strategy = TuningStrategy::kPerturb;
    } else {
      throw ConfigError("tuning.strategy: expected 'grid' or 'perturb'");
    }
    obj.read("eta0_min", cfg.tuning.eta0_min);
    obj.read("eta0_max", cfg.tuning.eta0_max);
    obj.read("factors", cfg.tuning.factors);
    obj.finish();
  }
  root.finish();
  m.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

Json config_to_json(const ExperimentConfig& cfg) {
  const MarketConfig& m = cfg.market;
  return {
      {"seed", cfg.seed},
      {"instances", cfg.instances},
      {"tau", cfg.tau},
      {"n_cycles", cfg.n_cycles},
      {"chunk_size", cfg.chunk_size},
      {"output_dir", cfg.output_dir},
      {"mode", to_string(cfg.mode)},
      {"features",
       {{"K", m.num_user_features}, {"o", m.pair_entries}, {"s", m.single_entries}}},
      {"market",
       {{"user_cardinalities", m.user_cardinalities},
        {"user_zipf", m.user_zipf},
        {"initial_ads", m.initial_ads},
        {"ad_arrival_rate", m.ad_arrival_rate},
        {"ad_mean_lifetime", m.ad_mean_lifetime},
        {"pause_prob", m.pause_prob},
        {"resume_prob", m.resume_prob},
        {"advertisers", m.advertisers},
        {"campaigns_per_advertiser", m.campaigns_per_advertiser},
        {"truth_scale", m.truth_scale},
        {"truth_drift", m.truth_drift},
        {"truth_bias", m.truth_bias},
        {"cost_rate", m.cost_rate},
        {"cycle_seconds", m.cycle_seconds}}},
      {"lifecycle",
       {{"sigma_init", cfg.lifecycle.sigma_init},
        {"evict_after", cfg.lifecycle.evict_after}}},
      {"hyperparams", hyperparams_to_json(cfg.hyperparams)},
      {"tuning",
       {{"strategy",
         cfg.tuning.strategy == TuningStrategy::kGrid ? "grid" : "perturb"},
        {"eta0_min", cfg.tuning.eta0_min},
        {"eta0_max", cfg.tuning.eta0_max},
        {"factors", cfg.tuning.factors}}},
  };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// ---- reports ------------------------------------------------------------

Json hyperparams_to_json(const HyperParams& hp) {
  return {{"eta0", hp.eta0},         {"alpha", hp.alpha},
          {"beta_ada", hp.beta_ada}, {"lambda", hp.lambda},
          {"beta_dual", hp.beta_dual}, {"k_rho", hp.k_rho},
          {"naive_factor", hp.naive_factor}};
}

Json norm_stats_to_json(const NormStats& stats) {
  return {{"max_inf_norm", stats.max_inf_norm},
          {"max_msqr", stats.max_msqr},
          {"top10_avg_inf_norm", stats.top10_avg_inf_norm}};
}

Json cycle_report_to_json(const CycleReport& report) {
  Json instances = Json::array();
  for (const auto& inst : report.instances) {
    Json j = {{"instance_id", inst.instance_id},
              {"mode", to_string(inst.mode)},
              {"hyperparams", hyperparams_to_json(inst.hp)},
              {"logloss", inst.logloss},
              {"events_trained", inst.events_trained},
              {"diverged", inst.diverged},
              {"norms", norm_stats_to_json(inst.norms)}};
    j["abort_position"] = inst.abort_position ? Json(*inst.abort_position)
                                              : Json(nullptr);
    instances.push_back(std::move(j));
  }
  Json j = {{"cycle_index", report.cycle_index},
            {"retained_fraction", report.retained_fraction},
            {"instances", std::move(instances)}};
  j["best_instance_id"] = report.best_instance_id
                              ? Json(*report.best_instance_id)
                              : Json(nullptr);
  return j;
}

Json rho_search_to_json(const RhoSearchResult& result) {
  Json per_k = Json::object();
  for (const auto& [k, ll] : result.per_k_logloss) {
    per_k[std::to_string(k)] = ll;
  }
  return {{"rho0", result.rho0},
          {"k_star", result.k_star},
          {"rho", result.k_star * result.rho0},
          {"per_k_logloss", std::move(per_k)},
          {"diverged_k", result.diverged_k}};
}

Json lift_report_to_json(const LiftReport& report) {
  return {{"metric", to_string(report.metric)},
          {"point_lift_pct", report.point_lift_pct},
          {"ci95", {report.ci_low, report.ci_high}},
          {"n_mc_samples", report.n_mc_samples}};
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string series_to_csv(std::span<const SeriesRow> series,
                          std::span<const double> baseline_logloss) {
  const bool with_lift = !baseline_logloss.empty();
  std::string out =
      "cycle,retained_fraction,max_inf_norm,max_msqr,top10_avg_inf_norm,"
      "best_logloss";
  out += with_lift ? ",logloss_lift_vs_baseline\n" : "\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const SeriesRow& r = series[i];
    out += std::to_string(r.cycle) + "," + format_double(r.retained_fraction) +
           "," + format_double(r.max_inf_norm) + "," +
           format_double(r.max_msqr) + "," +
           format_double(r.top10_avg_inf_norm) + "," +
           format_double(r.best_logloss);
    if (with_lift) {
      double lift = std::numeric_limits<double>::quiet_NaN();
      if (i < baseline_logloss.size() && baseline_logloss[i] > 0.0 &&
          !std::isnan(r.best_logloss)) {
        lift = logloss_lift(r.best_logloss, baseline_logloss[i]);
      }
      out += "," + format_double(lift);
    }
    out += "\n";
  }
  return out;
}

std::vector<SeriesRow> series_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("cycle,", 0) != 0) {
    throw InvalidInputError("series csv: missing header");
  }
  auto parse = [](const std::string& cell) {
    if (cell == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
      throw InvalidInputError("series csv: bad number '" + cell + "'");
    }
    return v;
  };
  std::vector<SeriesRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() < 6) throw InvalidInputError("series csv: short row");
    SeriesRow r;
    r.cycle = static_cast<int>(parse(cells[0]));
    r.retained_fraction = parse(cells[1]);
    r.max_inf_norm = parse(cells[2]);
    r.max_msqr = parse(cells[3]);
    r.top10_avg_inf_norm = parse(cells[4]);
    r.best_logloss = parse(cells[5]);
    rows.push_back(r);
  }
  return rows;
}

std::string scatter_to_csv(std::span<const ScatterPoint> points) {
  std::string out = "id,inf_norm,update_count\n";
  for (const auto& p : points) {
    out += to_string(p.id) + "," + format_double(p.inf_norm) + "," +
           std::to_string(p.update_count) + "\n";
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace latentguard
