#include "sixo/experiment.hpp"

#include <cmath>
#include <fstream>

#include "sixo/errors.hpp"

namespace sixo {

namespace {

using nlohmann::json;

bool compatible(const json& want, const json& have) {
  if (want.is_number()) return have.is_number();
  if (want.is_boolean()) return have.is_boolean();
  if (want.is_string()) return have.is_string();
  if (want.is_array()) return have.is_array();
  if (want.is_object()) return have.is_object();
  return true;  // null defaults accept anything
}

// Overlays `user` on `defaults`, rejecting unknown keys and mismatched types.
json overlay(json defaults, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError("section '" + where + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown key '" + where + "." + key + "'");
    if (!compatible(defaults[key], value)) {
      throw ConfigError("key '" + where + "." + key + "' has the wrong type");
    }
    if (defaults[key].is_number_integer() && !value.is_number_integer()) {
      throw ConfigError("key '" + where + "." + key + "' must be an integer");
    }
    defaults[key] = value;
  }
  return defaults;
}

std::string kind_of(const json& section, const std::string& where, const char* field = "kind") {
  if (!section.is_object() || !section.contains(field) || !section[field].is_string()) {
    throw ConfigError("section '" + where + "' needs a string '" + field + "'");
  }
  return section[field].get<std::string>();
}

json model_defaults(const std::string& kind) {
  if (kind == "gdd") return {{"kind", "gdd"}, {"T", 10}, {"alpha", 0.0}};
  if (kind == "svm") {
    return {{"kind", "svm"}, {"dim", 2}, {"T", 30}, {"init", "random"}, {"init_seed", 0}, {"init_variance", 0.3}};
  }
  if (kind == "hh") return {{"kind", "hh"}, {"T", 40}, {"i_ext", 13.0}, {"observation_every", 1}};
  throw ConfigError("unknown value '" + kind + "' for key 'model.kind'");
}

json proposal_defaults(const std::string& kind) {
  if (kind == "bootstrap" || kind == "affine" || kind == "perturbation" || kind == "gdd-optimal") {
    return {{"kind", kind}};
  }
  throw ConfigError("unknown value '" + kind + "' for key 'proposal.kind'");
}

json twist_defaults(const std::string& kind) {
  if (kind == "unit" || kind == "gaussian" || kind == "gdd-optimal") return {{"kind", kind}};
  if (kind == "quadrature") return {{"kind", kind}, {"degree", 5}};
  if (kind == "quadratic") return {{"kind", kind}, {"hidden", 32}, {"y_scale", 0.3}, {"init_seed", 0}};
  if (kind == "rnn") {
    return {{"kind", kind},
            {"hidden", 32},
            {"init_seed", 0},
            {"obs_shift", json::array()},
            {"obs_scale", json::array()},
            {"state_shift", json::array()},
            {"state_scale", json::array()}};
  }
  throw ConfigError("unknown value '" + kind + "' for key 'twist.kind'");
}

json data_defaults(const std::string& source) {
  if (source == "synthetic") {
    return {{"source", source}, {"seed", 1}, {"count", 1}, {"truth", json::object()},
            {"test_seed", 2},   {"test_count", 1}};
  }
  if (source == "csv" || source == "file") return {{"source", source}, {"path", ""}, {"test_path", ""}};
  throw ConfigError("unknown value '" + source + "' for key 'data.source'");
}

json training_defaults() { return training_to_json(TrainConfig{}, 0); }

// Merges a user section over a preset section; a different kind replaces it.
json merge_section(const json& base, const json& user, const char* field) {
  if (base.is_null()) return user;
  if (user.is_null()) return base;
  if (!user.is_object()) return user;
  if (user.contains(field) && base.contains(field) && user[field] != base[field]) return user;
  json out = base;
  for (const auto& [k, v] : user.items()) out[k] = v;
  return out;
}

RowVector row_from(const json& values, const std::string& where) {
  RowVector out(static_cast<Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].is_number()) throw ConfigError("key '" + where + "' must hold numbers");
    out(static_cast<Index>(i)) = values[i].get<double>();
  }
  return out;
}

void apply_truth(StateSpaceModel& model, const json& truth) {
  ParameterSet values = model.parameters().values();
  for (const auto& [name, v] : truth.items()) {
    auto it = values.find(name);
    if (it == values.end()) throw ConfigError("unknown key 'data.truth." + name + "'");
    Matrix& m = it->second;
    if (v.is_number()) {
      m.setConstant(v.get<double>());
    } else if (v.is_array() && static_cast<Index>(v.size()) == m.size()) {
      const RowVector r = row_from(v, "data.truth." + name);
      for (Index i = 0; i < m.size(); ++i) m(i) = r(i);
    } else {
      throw ConfigError("key 'data.truth." + name + "' must be a number or an array of " +
                        std::to_string(m.size()));
    }
  }
  model.set_values(values);
}

json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_rows(const json& rows) {
  const Index R = static_cast<Index>(rows.size());
  const Index C = R == 0 ? 0 : static_cast<Index>(rows[0].size());
  Matrix m(R, C);
  for (Index r = 0; r < R; ++r) {
    if (static_cast<Index>(rows[static_cast<std::size_t>(r)].size()) != C) throw ConfigError("ragged sample matrix");
    for (Index c = 0; c < C; ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

json training_to_json(const TrainConfig& c, int checkpoint_every) {
  return {{"method", to_string(c.method)},
          {"steps", c.steps},
          {"rounds", c.rounds},
          {"twist_steps", c.twist_steps},
          {"model_steps", c.model_steps},
          {"particles", c.particles},
          {"datasets_per_update", c.datasets_per_update},
          {"lr_model", c.lr_model},
          {"lr_twist", c.lr_twist},
          {"clip", c.clip ? json(*c.clip) : json(nullptr)},
          {"dre_pool", c.dre_pool},
          {"dre_batch", c.dre_batch},
          {"learn_model", c.learn_model},
          {"learn_proposal", c.learn_proposal},
          {"schedule", c.schedule ? json(to_string(*c.schedule)) : json(nullptr)},
          {"scheme", c.scheme ? json(to_string(*c.scheme)) : json(nullptr)},
          {"score_causal", c.score_control.causal},
          {"score_baseline", c.score_control.baseline},
          {"eval_every", c.eval_every},
          {"eval_particles", c.eval_particles},
          {"eval_sweeps", c.eval_sweeps},
          {"eval_sequences", c.eval_sequences},
          {"bpf_particles", c.bpf_particles},
          {"record_wall_clock", c.record_wall_clock},
          {"checkpoint_every", checkpoint_every}};
}

TrainConfig training_from_json(const json& section, int* checkpoint_every) {
  const json s = overlay(training_defaults(), section, "training");
  TrainConfig c;
  c.method = parse_method(s["method"].get<std::string>());
  c.steps = s["steps"].get<int>();
  c.rounds = s["rounds"].get<int>();
  c.twist_steps = s["twist_steps"].get<int>();
  c.model_steps = s["model_steps"].get<int>();
  c.particles = s["particles"].get<int>();
  c.datasets_per_update = s["datasets_per_update"].get<int>();
  c.lr_model = s["lr_model"].get<double>();
  c.lr_twist = s["lr_twist"].get<double>();
  if (!s["clip"].is_null()) {
    if (!s["clip"].is_number()) throw ConfigError("key 'training.clip' must be a number or null");
    c.clip = s["clip"].get<double>();
  }
  c.dre_pool = s["dre_pool"].get<Index>();
  c.dre_batch = s["dre_batch"].get<Index>();
  c.learn_model = s["learn_model"].get<bool>();
  c.learn_proposal = s["learn_proposal"].get<bool>();
  try {
    if (!s["schedule"].is_null()) c.schedule = parse_schedule(s["schedule"].get<std::string>());
    if (!s["scheme"].is_null()) c.scheme = parse_resampling_scheme(s["scheme"].get<std::string>());
  } catch (const json::exception&) {
    throw ConfigError("keys 'training.schedule' and 'training.scheme' must be strings or null");
  }
  c.score_control.causal = s["score_causal"].get<bool>();
  c.score_control.baseline = s["score_baseline"].get<bool>();
  c.eval_every = s["eval_every"].get<int>();
  c.eval_particles = s["eval_particles"].get<int>();
  c.eval_sweeps = s["eval_sweeps"].get<int>();
  c.eval_sequences = s["eval_sequences"].get<int>();
  c.bpf_particles = s["bpf_particles"].get<int>();
  c.record_wall_clock = s["record_wall_clock"].get<bool>();
  if (checkpoint_every != nullptr) *checkpoint_every = s["checkpoint_every"].get<int>();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("training: ") + e.what());
  }
  return c;
}

json preset_document(const std::string& name) {
  if (name == "gdd-paper") {
    return {{"model", {{"kind", "gdd"}, {"T", 10}, {"alpha", 0.0}}},
            {"proposal", {{"kind", "affine"}}},
            {"twist", {{"kind", "quadratic"}, {"hidden", 32}, {"y_scale", 0.3}, {"init_seed", 0}}},
            {"data", {{"source", "synthetic"}, {"seed", 1}, {"count", 512}, {"truth", {{"alpha", 1.0}}},
                      {"test_seed", 2}, {"test_count", 32}}},
            {"training", {{"method", "SIXO-DRE"}, {"particles", 4}, {"rounds", 100}, {"twist_steps", 200},
                          {"model_steps", 200}, {"steps", 20000}, {"lr_model", 1e-3}, {"lr_twist", 1e-3},
                          {"dre_pool", 8192}, {"dre_batch", 64}, {"datasets_per_update", 4},
                          {"eval_every", 10}, {"eval_particles", 4}, {"eval_sweeps", 100},
                          {"eval_sequences", 32}}}};
  }
  if (name == "svm-paper") {
    return {{"model", {{"kind", "svm"}, {"dim", 22}, {"T", 119}, {"init", "random"}, {"init_seed", 0},
                       {"init_variance", 0.3}}},
            {"proposal", {{"kind", "perturbation"}}},
            {"twist", {{"kind", "rnn"}, {"hidden", 128}, {"init_seed", 0}}},
            {"data", {{"source", "synthetic"}, {"seed", 1}, {"count", 1},
                      {"truth", {{"mu", 0.0}, {"phi_raw", std::atanh(0.9)}, {"log_beta", 0.0}, {"log_q", std::log(0.1)}}},
                      {"test_seed", 2}, {"test_count", 1}}},
            {"training", {{"method", "SIXO-DRE"}, {"particles", 4}, {"datasets_per_update", 4},
                          {"rounds", 20}, {"twist_steps", 1000}, {"model_steps", 1000}, {"lr_model", 1e-4},
                          {"lr_twist", 3e-3}, {"dre_pool", 32000}, {"dre_batch", 64}, {"eval_every", 1},
                          {"eval_particles", 4}, {"eval_sweeps", 100}, {"bpf_particles", 2048}}}};
  }
  if (name == "hh-paper") {
    return {{"model", {{"kind", "hh"}, {"T", 40}, {"i_ext", 1.3}, {"observation_every", 1}}},
            {"proposal", {{"kind", "bootstrap"}}},
            {"twist", {{"kind", "rnn"}, {"hidden", 32}, {"init_seed", 0}, {"obs_shift", {-65.0}},
                       {"obs_scale", {1.0 / 25}}, {"state_shift", {-65.0, 0.0, 0.0, 0.0}},
                       {"state_scale", {1.0 / 25, 1.0, 1.0, 1.0}}}},
            {"data", {{"source", "synthetic"}, {"seed", 1}, {"count", 64}, {"truth", {{"i_ext", 13.0}}},
                      {"test_seed", 2}, {"test_count", 30}}},
            {"training", {{"method", "SIXO-DRE"}, {"particles", 4}, {"datasets_per_update", 4},
                          {"rounds", 20}, {"twist_steps", 400}, {"model_steps", 100}, {"lr_model", 0.1},
                          {"lr_twist", 0.01}, {"dre_pool", 2048}, {"dre_batch", 32}, {"clip", 50.0},
                          {"eval_every", 1}, {"eval_particles", 4}, {"eval_sweeps", 20},
                          {"eval_sequences", 4}, {"bpf_particles", 256}}}};
  }
  throw ConfigError("unknown preset '" + name + "'");
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  static const char* kTop[] = {"preset", "model", "proposal", "twist", "data", "training", "seed", "output"};
  for (const auto& [key, v] : doc.items()) {
    if (std::find(std::begin(kTop), std::end(kTop), key) == std::end(kTop)) {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  ExperimentConfig c;
  json base = json::object();
  if (doc.contains("preset")) {
    if (!doc["preset"].is_string()) throw ConfigError("key 'preset' must be a string");
    c.preset = doc["preset"].get<std::string>();
    base = preset_document(c.preset);
  }
  auto section = [&](const char* name, const char* field) {
    const json b = base.contains(name) ? base[name] : json();
    const json u = doc.contains(name) ? doc[name] : json();
    return merge_section(b, u, field);
  };
  const json model = section("model", "kind");
  const json data = section("data", "source");
  if (model.is_null()) throw ConfigError("missing section 'model'");
  if (data.is_null()) throw ConfigError("missing section 'data'");
  c.model = overlay(model_defaults(kind_of(model, "model")), model, "model");
  json proposal = section("proposal", "kind");
  if (proposal.is_null()) proposal = {{"kind", "bootstrap"}};
  c.proposal = overlay(proposal_defaults(kind_of(proposal, "proposal")), proposal, "proposal");
  json twist = section("twist", "kind");
  if (twist.is_null()) twist = {{"kind", "unit"}};
  c.twist = overlay(twist_defaults(kind_of(twist, "twist")), twist, "twist");
  c.data = overlay(data_defaults(kind_of(data, "data", "source")), data, "data");
  json training = section("training", "");
  if (training.is_null()) training = json::object();
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer() || doc["seed"].get<long long>() < 0) throw ConfigError("key 'seed' must be a non-negative integer");
    c.training.seed = doc["seed"].get<std::uint64_t>();
  }
  const std::uint64_t seed = c.training.seed;
  c.training = training_from_json(training, &c.checkpoint_every);
  c.training.seed = seed;
  if (c.checkpoint_every < 0) throw ConfigError("key 'training.checkpoint_every' must be non-negative");
  if (doc.contains("output")) {
    if (!doc["output"].is_string()) throw ConfigError("key 'output' must be a string");
    c.output = doc["output"].get<std::string>();
  }
  // Surface component mismatches at load time.
  build_twist(c);
  build_proposal(c);
  return c;
}

json ExperimentConfig::to_json() const {
  json out = {{"model", model},
              {"proposal", proposal},
              {"twist", twist},
              {"data", data},
              {"training", training_to_json(training, checkpoint_every)},
              {"seed", training.seed},
              {"output", output}};
  if (!preset.empty()) out["preset"] = preset;
  return out;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("configuration '" + path + "' is not valid JSON: " + e.what());
  }
  return ExperimentConfig::from_json(doc);
}

std::unique_ptr<StateSpaceModel> build_model(const ExperimentConfig& c) {
  const json& m = c.model;
  const std::string kind = m["kind"];
  const int T = m["T"].get<int>();
  if (T < 1) throw ConfigError("key 'model.T' must be positive");
  if (kind == "gdd") return std::make_unique<GddModel>(T, m["alpha"].get<double>());
  if (kind == "svm") {
    const int N = m["dim"].get<int>();
    auto model = std::make_unique<SvmModel>(N, T);
    const std::string init = m["init"];
    if (init == "random") {
      const double sd = std::sqrt(m["init_variance"].get<double>());
      RngStream rng(m["init_seed"].get<std::uint64_t>());
      ParameterSet p;
      p["mu"] = rng.split("mu").normal(1, N) * sd;
      p["phi_raw"] = (rng.split("phi").normal(1, N) * sd).array() + std::atanh(0.1);
      p["log_beta"] = rng.split("beta").normal(1, N) * sd;
      p["log_q"] = rng.split("q").normal(1, N) * sd;
      model->set_values(p);
    } else if (init != "zeros") {
      throw ConfigError("key 'model.init' must be 'random' or 'zeros'");
    }
    return model;
  }
  const int every = m["observation_every"].get<int>();
  if (every < 1) throw ConfigError("key 'model.observation_every' must be positive");
  return std::make_unique<HhModel>(T, m["i_ext"].get<double>(), every);
}

std::unique_ptr<StateSpaceModel> build_truth_model(const ExperimentConfig& c) {
  auto model = build_model(c);
  if (c.data["source"] == "synthetic") apply_truth(*model, c.data["truth"]);
  return model;
}

std::unique_ptr<Proposal> build_proposal(const ExperimentConfig& c) {
  const std::string kind = c.proposal["kind"];
  const std::string model = c.model["kind"];
  const int T = c.model["T"].get<int>();
  if (kind == "bootstrap") return std::make_unique<BootstrapProposal>();
  if (kind == "affine") {
    if (model != "gdd") throw ConfigError("key 'proposal.kind': affine proposals need the gdd model");
    return std::make_unique<AffineGaussianProposal>(T);
  }
  if (kind == "gdd-optimal") {
    if (model != "gdd") throw ConfigError("key 'proposal.kind': gdd-optimal needs the gdd model");
    return std::make_unique<GddOptimalProposal>();
  }
  if (model != "svm") throw ConfigError("key 'proposal.kind': perturbation proposals need the svm model");
  return std::make_unique<PerturbationProposal>(c.model["dim"].get<int>(), T);
}

std::unique_ptr<Twist> build_twist(const ExperimentConfig& c) {
  const json& t = c.twist;
  const std::string kind = t["kind"];
  const std::string model = c.model["kind"];
  const int T = c.model["T"].get<int>();
  if (kind == "unit") return std::make_unique<UnitTwist>();
  if (kind == "gdd-optimal" || kind == "gaussian" || kind == "quadratic") {
    if (model != "gdd") throw ConfigError("key 'twist.kind': " + kind + " twists need the gdd model");
  }
  if (kind == "gdd-optimal") return std::make_unique<GddOptimalTwist>();
  if (kind == "gaussian") return std::make_unique<GaussianTwist>(T);
  if (kind == "quadrature") {
    if (model == "hh") throw ConfigError("key 'twist.kind': quadrature twists need dense observations");
    return std::make_unique<QuadratureTwist>(t["degree"].get<int>());
  }
  if (kind == "quadratic") {
    return std::make_unique<QuadraticHeadTwist>(T, t["hidden"].get<int>(), RngStream(t["init_seed"].get<std::uint64_t>()),
                                                t["y_scale"].get<double>());
  }
  const auto m = build_model(c);
  auto scaling = [&](const char* shift, const char* scale, int dim) {
    InputScaling s;
    if (t[shift].empty() && t[scale].empty()) return s;
    s.shift = row_from(t[shift], std::string("twist.") + shift);
    s.scale = row_from(t[scale], std::string("twist.") + scale);
    if (s.shift.size() != dim || s.scale.size() != dim) {
      throw ConfigError(std::string("keys 'twist.") + shift + "' and 'twist." + scale + "' need " +
                        std::to_string(dim) + " entries");
    }
    return s;
  };
  return std::make_unique<BackwardRnnTwist>(m->obs_dim(), m->state_dim(), t["hidden"].get<int>(),
                                            RngStream(t["init_seed"].get<std::uint64_t>()),
                                            scaling("obs_shift", "obs_scale", m->obs_dim()),
                                            scaling("state_shift", "state_scale", m->state_dim()));
}

Observations load_data(const ExperimentConfig& c, Split split) {
  const json& d = c.data;
  const std::string source = d["source"];
  const auto model = build_truth_model(c);
  Observations obs;
  if (source == "synthetic") {
    const bool train = split == Split::kTrain;
    const int count = (train ? d["count"] : d["test_count"]).get<int>();
    if (count < 1) throw ConfigError(std::string("key 'data.") + (train ? "count" : "test_count") + "' must be positive");
    obs = simulate(*model, count, RngStream((train ? d["seed"] : d["test_seed"]).get<std::uint64_t>())).observations;
  } else {
    const std::string path = (split == Split::kTrain ? d["path"] : d["test_path"]).get<std::string>();
    if (path.empty()) {
      throw ConfigError(std::string("key 'data.") + (split == Split::kTrain ? "path" : "test_path") + "' is empty");
    }
    obs = source == "csv" ? observations_from_matrix(load_returns_csv(path)) : read_samples(path);
  }
  if (obs.length() != model->length()) {
    throw ConfigError("data has length " + std::to_string(obs.length()) + " but key 'model.T' is " +
                      std::to_string(model->length()));
  }
  if (obs.dim() != model->obs_dim()) throw ConfigError("data dimension does not match the model");
  return obs;
}

void write_samples(const Dataset& data, const std::string& path) {
  json latents = json::array(), observations = json::array(), mask = json::array();
  const Observations& o = data.observations;
  for (std::size_t t = 0; t < data.latents.size(); ++t) {
    latents.push_back(matrix_rows(data.latents[t]));
    const int step = static_cast<int>(t) + 1;
    const bool present = o.length() > 0 && o.present(step);
    mask.push_back(present ? 1 : 0);
    observations.push_back(present ? matrix_rows(o.at(step)) : json(nullptr));
  }
  const json doc = {{"format", "sixo-samples"}, {"mask", mask}, {"latents", latents}, {"observations", observations}};
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write samples to '" + path + "'");
  out << doc.dump() << '\n';
}

Observations read_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read samples '" + path + "'");
  try {
    json doc;
    in >> doc;
    if (doc.at("format") != "sixo-samples") throw ConfigError("'" + path + "' is not a samples document");
    std::vector<Matrix> values;
    std::vector<char> mask;
    for (const json& y : doc.at("observations")) {
      mask.push_back(y.is_null() ? 0 : 1);
      values.push_back(y.is_null() ? Matrix() : matrix_from_rows(y));
    }
    return Observations(std::move(values), std::move(mask));
  } catch (const json::exception& e) {
    throw ConfigError("malformed samples '" + path + "': " + e.what());
  }
}

}  // namespace sixo
