#include "feat/config.hpp"

#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "feat/io.hpp"

namespace feat {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::set<std::string> system_keys = {
      "kind",     "dim",      "mean",     "variance", "components", "std",       "seed",
      "barrier",  "tilt",     "particles", "epsilon", "sigma",      "trap",      "side",
      "mass2",    "coupling", "umbrella_strength",    "umbrella_center",         "init"};
  static const std::map<std::string, std::set<std::string>> s = {
      {"run", {"seed", "out"}},
      {"system_a", system_keys},
      {"system_b", system_keys},
      {"sampler",
       {"method", "count", "steps", "burn_in", "step_size", "target_acceptance", "adaptation_gain", "thin"}},
      {"train",
       {"iterations", "batch_size", "learning_rate", "t_clip", "ot_pairing", "ot_batch_size", "canonicalize",
        "canonicalize_particles", "warmup", "hidden", "activation", "noise"}},
      {"transport", {"model", "sigma", "steps", "paths", "threads", "block", "probes"}},
      {"estimator", {"bootstrap"}},
      {"reweight", {"lo", "hi", "bins"}},
  };
  return s;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> raw(const std::string& section, const std::string& key) const {
    const auto sec = tree_.get_child_optional(pt::ptree::path_type(section, '\0'));
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return *v;
  }

  double real(const std::string& sec, const std::string& key, double def) const {
    const auto r = raw(sec, key);
    if (!r) return def;
    const auto v = io::parse_real(*r);
    if (!v || !std::isfinite(*v)) bad(sec, key, *r);
    return *v;
  }

  long long integer(const std::string& sec, const std::string& key, long long def) const {
    const auto r = raw(sec, key);
    if (!r) return def;
    const auto v = io::parse_integer(*r);
    if (!v) bad(sec, key, *r);
    return *v;
  }

  std::uint64_t unsigned_value(const std::string& sec, const std::string& key, std::uint64_t def) const {
    const auto r = raw(sec, key);
    if (!r) return def;
    const auto v = io::parse_unsigned(*r);
    if (!v) bad(sec, key, *r);
    return *v;
  }

  bool boolean(const std::string& sec, const std::string& key, bool def) const {
    const auto r = raw(sec, key);
    if (!r) return def;
    if (*r == "1" || *r == "true" || *r == "yes") return true;
    if (*r == "0" || *r == "false" || *r == "no") return false;
    bad(sec, key, *r);
  }

  std::string text(const std::string& sec, const std::string& key, const std::string& def) const {
    return raw(sec, key).value_or(def);
  }

  std::vector<double> reals(const std::string& sec, const std::string& key, std::vector<double> def) const {
    const auto r = raw(sec, key);
    if (!r) return def;
    std::vector<double> out;
    for (auto tok : io::split(*r, ',')) {
      const auto v = io::parse_real(tok);
      if (!v || !std::isfinite(*v)) bad(sec, key, *r);
      out.push_back(*v);
    }
    return out;
  }

  std::vector<int> ints(const std::string& sec, const std::string& key, std::vector<int> def) const {
    const auto r = raw(sec, key);
    if (!r) return def;
    std::vector<int> out;
    if (r->empty()) return out;
    for (auto tok : io::split(*r, ',')) {
      const auto v = io::parse_integer(tok);
      if (!v || *v <= 0) bad(sec, key, *r);
      out.push_back(static_cast<int>(*v));
    }
    return out;
  }

 private:
  [[noreturn]] static void bad(const std::string& sec, const std::string& key, const std::string& value) {
    throw ConfigError("invalid value '" + value + "' for " + sec + "." + key);
  }

  const pt::ptree& tree_;
};

SystemSpec read_system(const Reader& r, const std::string& sec) {
  SystemSpec s;
  if (!r.raw(sec, "kind")) throw ConfigError("missing " + sec + ".kind");
  s.kind = r.text(sec, "kind", "");
  s.dim = static_cast<int>(r.integer(sec, "dim", 1));
  s.mean = r.reals(sec, "mean", {0.0});
  s.variance = r.reals(sec, "variance", {1.0});
  s.components = static_cast<int>(r.integer(sec, "components", 16));
  s.component_std = r.real(sec, "std", 0.0);
  s.gmm_seed = r.unsigned_value(sec, "seed", 0);
  if (s.kind == "gmm" && !r.raw(sec, "seed")) throw ConfigError(sec + ": gmm systems need an explicit seed");
  s.double_well.dim = s.dim;
  s.double_well.barrier = r.real(sec, "barrier", 1.0);
  s.double_well.tilt = r.real(sec, "tilt", 0.0);
  s.lj.particles = static_cast<int>(r.integer(sec, "particles", 2));
  s.lj.epsilon = r.real(sec, "epsilon", 1.0);
  s.lj.sigma = r.real(sec, "sigma", 1.0);
  s.lj.trap = r.real(sec, "trap", 1.0);
  s.phi4.side = static_cast<int>(r.integer(sec, "side", 4));
  s.phi4.mass2 = r.real(sec, "mass2", -1.0);
  s.phi4.coupling = r.real(sec, "coupling", 0.8);
  if (r.raw(sec, "umbrella_strength") || r.raw(sec, "umbrella_center")) {
    s.umbrella = Umbrella{r.real(sec, "umbrella_strength", 0.0), r.real(sec, "umbrella_center", 0.0)};
  }
  s.init = r.real(sec, "init", 0.0);
  return s;
}

void apply_override(pt::ptree& tree, const std::string& item) {
  const auto eq = item.find('=');
  const auto dot = item.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 || dot + 1 == eq) {
    throw ConfigError("override '" + item + "' must look like section.key=value", "bad-override");
  }
  const std::string section = item.substr(0, dot);
  const std::string key = item.substr(dot + 1, eq - dot - 1);
  if (!tree.get_child_optional(pt::ptree::path_type(section, '\0'))) {
    tree.add_child(pt::ptree::path_type(section, '\0'), pt::ptree());
  }
  tree.get_child(pt::ptree::path_type(section, '\0')).put(pt::ptree::path_type(key, '\0'), item.substr(eq + 1));
}

void check_schema(const pt::ptree& tree) {
  for (const auto& [section, body] : tree) {
    const auto it = schema().find(section);
    if (it == schema().end()) throw ConfigError("unknown config section [" + section + "]", "unknown-key");
    if (!body.data().empty()) throw ConfigError("value outside any section: " + section, "unknown-key");
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ConfigError("unknown config key " + section + "." + key, "unknown-key");
    }
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& ini_text, const std::vector<std::string>& overrides) {
  pt::ptree tree;
  try {
    std::istringstream in(ini_text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")",
                      "malformed-config");
  }
  for (const auto& o : overrides) apply_override(tree, o);
  check_schema(tree);
  const Reader r(tree);

  ExperimentConfig cfg;
  if (!r.raw("run", "seed")) throw ConfigError("missing run.seed (seeds are mandatory)", "missing-seed");
  cfg.seed = r.unsigned_value("run", "seed", 0);
  cfg.out = r.text("run", "out", "out");
  cfg.system_a = read_system(r, "system_a");
  cfg.system_b = read_system(r, "system_b");

  cfg.sampler.method = r.text("sampler", "method", "auto");
  if (cfg.sampler.method != "auto" && cfg.sampler.method != "exact" && cfg.sampler.method != "mala") {
    throw ConfigError("sampler.method must be auto, exact or mala");
  }
  cfg.sampler.count = r.integer("sampler", "count", 10000);
  cfg.sampler.mala.steps = r.integer("sampler", "steps", 0);
  cfg.sampler.mala.burn_in_fraction = r.real("sampler", "burn_in", 0.2);
  cfg.sampler.mala.step_size = r.real("sampler", "step_size", 1e-2);
  cfg.sampler.mala.target_acceptance = r.real("sampler", "target_acceptance", 0.6);
  cfg.sampler.mala.adaptation_gain = r.real("sampler", "adaptation_gain", 0.1);
  cfg.sampler.mala.thin = static_cast<int>(r.integer("sampler", "thin", 1));
  if (cfg.sampler.count < 1 || cfg.sampler.mala.thin < 1) throw ConfigError("sampler.count and thin must be >= 1");

  TrainConfig& t = cfg.train;
  t.iterations = r.integer("train", "iterations", t.iterations);
  t.batch_size = static_cast<int>(r.integer("train", "batch_size", t.batch_size));
  t.learning_rate = r.real("train", "learning_rate", t.learning_rate);
  t.t_clip = r.real("train", "t_clip", t.t_clip);
  t.ot_pairing = r.boolean("train", "ot_pairing", t.ot_pairing);
  t.ot_batch_size = static_cast<int>(r.integer("train", "ot_batch_size", t.ot_batch_size));
  t.canonicalize = r.boolean("train", "canonicalize", t.canonicalize);
  t.canonicalize_particles = r.boolean("train", "canonicalize_particles", t.canonicalize_particles);
  t.warmup_iterations = r.integer("train", "warmup", t.warmup_iterations);
  t.hidden = r.ints("train", "hidden", t.hidden);
  t.activation = ad::parse_activation(r.text("train", "activation", "gelu"));
  t.schedule.noise = r.real("train", "noise", t.schedule.noise);
  if (!(t.t_clip > 0.0 && t.t_clip < 0.5)) throw ConfigError("train.t_clip must lie in (0, 0.5)");
  if (t.schedule.noise < 0.0) throw ConfigError("train.noise must be >= 0");
  t.seed = derive_seed(cfg.seed, seed_label::kTraining);

  TransportSpec& tr = cfg.transport;
  tr.model = r.text("transport", "model", tr.model);
  if (tr.model != "learned" && tr.model != "analytic" && tr.model != "zero") {
    throw ConfigError("transport.model must be learned, analytic or zero");
  }
  tr.sigma = r.real("transport", "sigma", tr.sigma);
  tr.steps = static_cast<int>(r.integer("transport", "steps", tr.steps));
  tr.paths = r.integer("transport", "paths", tr.paths);
  tr.threads = static_cast<int>(r.integer("transport", "threads", tr.threads));
  tr.block = static_cast<int>(r.integer("transport", "block", tr.block));
  tr.probes = static_cast<int>(r.integer("transport", "probes", tr.probes));
  if (tr.sigma < 0.0 || tr.steps < 1 || tr.paths < 1 || tr.threads < 1 || tr.block < 1 || tr.probes < 1) {
    throw ConfigError("transport values out of range");
  }

  cfg.bootstrap = static_cast<int>(r.integer("estimator", "bootstrap", 200));
  cfg.reweight.lo = r.real("reweight", "lo", cfg.reweight.lo);
  cfg.reweight.hi = r.real("reweight", "hi", cfg.reweight.hi);
  cfg.reweight.bins = static_cast<int>(r.integer("reweight", "bins", cfg.reweight.bins));
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const ConfigError& e) {
    throw ConfigError("config file not found: " + path.string(), "missing-config");
  }
  return parse_config(text, overrides);
}

namespace {

Vector broadcast(const std::vector<double>& v, int dim, const char* what) {
  if (v.size() == 1) return Vector::Constant(dim, v[0]);
  if (static_cast<int>(v.size()) != dim) {
    throw ConfigError(std::string(what) + " needs 1 or dim values");
  }
  return Eigen::Map<const Vector>(v.data(), dim);
}

}  // namespace

EnergySystem build_system(const SystemSpec& s) {
  if (s.kind == "gaussian") {
    if (s.umbrella) throw ConfigError("umbrellas are supported on doublewell and phi4 systems only");
    return EnergySystem::gaussian(broadcast(s.mean, s.dim, "mean"), broadcast(s.variance, s.dim, "variance"));
  }
  if (s.kind == "gmm") {
    if (s.umbrella) throw ConfigError("umbrellas are supported on doublewell and phi4 systems only");
    const double std = s.component_std > 0.0 ? s.component_std : softplus(-3.0);
    return EnergySystem::gmm(s.dim, s.components, std, s.gmm_seed);
  }
  if (s.kind == "doublewell") return EnergySystem::double_well(s.double_well, s.umbrella);
  if (s.kind == "lj-cluster") {
    if (s.umbrella) throw ConfigError("umbrellas are supported on doublewell and phi4 systems only");
    return EnergySystem::lj_cluster(s.lj);
  }
  if (s.kind == "phi4") return EnergySystem::phi4(s.phi4, s.umbrella);
  throw ConfigError("unknown system kind '" + s.kind + "'", "unknown-system");
}

}  // namespace feat
