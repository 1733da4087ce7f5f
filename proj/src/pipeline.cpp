#include "feat/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "feat/gradcheck.hpp"
#include "feat/io.hpp"
#include "feat/mlp.hpp"

namespace feat {

namespace {

std::filesystem::path in_out(const ExperimentConfig& cfg, const char* name) { return cfg.out / name; }

void ensure_out(const ExperimentConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) throw ConfigError("cannot create output directory " + cfg.out.string(), "output-dir");
}

SampleSet read_required_samples(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) {
    throw ConfigError("missing artifact " + p.string() + " (run 'sample' first)", "missing-artifact");
  }
  return read_samples(p);
}

Matrix select_starts(const SampleSet& set, long paths, std::uint64_t seed) {
  if (set.size() < paths) {
    throw ConfigError("transport.paths (" + std::to_string(paths) + ") exceeds the " + std::to_string(set.size()) +
                      " available samples");
  }
  std::vector<Eigen::Index> idx(set.size());
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 gen(seed);
  std::shuffle(idx.begin(), idx.end(), gen);
  Matrix starts(set.dim(), paths);
  for (long j = 0; j < paths; ++j) starts.col(j) = set.samples.col(idx[j]);
  return starts;
}

}  // namespace

SampleSet draw_endpoint_samples(const EnergySystem& sys, const SystemSpec& spec, const SamplerSpec& sampler,
                                std::uint64_t seed) {
  const bool exact_ok = sys.kind() == "gaussian" || sys.kind() == "gmm";
  if (sampler.method == "exact" && !exact_ok) {
    throw ConfigError("exact sampling is unavailable for " + sys.kind(), "unsupported");
  }
  if (sampler.method != "mala" && exact_ok && !sys.umbrella()) {
    SampleSet set = exact_samples(sys, sampler.count, seed);
    set.system = sys.kind();
    return set;
  }
  MalaConfig mc = sampler.mala;
  mc.seed = seed;
  if (mc.steps == 0) {
    mc.steps = static_cast<long>(std::ceil(static_cast<double>(sampler.count) * mc.thin / (1.0 - mc.burn_in_fraction))) +
               mc.thin;
  }
  const Vector x0 = sys.kind() == "lj-cluster" ? lj_initial_configuration(spec.lj, derive_seed(seed, "lattice"))
                                               : Vector::Constant(sys.dim(), spec.init);
  MalaRun run = mala_chain(sys, mc, x0);
  SampleSet& set = run.set;
  if (set.size() < sampler.count) {
    throw ConfigError("sampler kept " + std::to_string(set.size()) + " samples, fewer than sampler.count");
  }
  set.samples = set.samples.rightCols(sampler.count).eval();
  if (set.grads) set.grads = set.grads->rightCols(sampler.count).eval();
  set.system = sys.kind();
  return set;
}

StageOutcome run_sample(const ExperimentConfig& cfg) {
  ensure_out(cfg);
  const EnergySystem a = build_system(cfg.system_a);
  const EnergySystem b = build_system(cfg.system_b);
  if (a.dim() != b.dim()) throw ConfigError("endpoint systems must share a dimension", "dimension-mismatch");
  std::ostringstream sum;
  int k = 0;
  for (const auto& [sys, spec, name] : {std::tuple{&a, &cfg.system_a, artifact::kSamplesA},
                                        std::tuple{&b, &cfg.system_b, artifact::kSamplesB}}) {
    const SampleSet set = draw_endpoint_samples(*sys, *spec, cfg.sampler,
                                                derive_seed(cfg.seed, seed_label::kSampling, k++));
    write_samples(in_out(cfg, name), set);
    sum << "wrote " << (cfg.out / name).string() << " (" << set.size() << " samples, dim " << set.dim() << ")\n";
  }
  return {sum.str(), true};
}

StageOutcome run_train(const ExperimentConfig& cfg) {
  ensure_out(cfg);
  const SampleSet a = read_required_samples(in_out(cfg, artifact::kSamplesA));
  const SampleSet b = read_required_samples(in_out(cfg, artifact::kSamplesB));
  const TrainResult res = train_transport(cfg.train, a, b);
  const int dim = static_cast<int>(a.dim());
  write_checkpoint(in_out(cfg, artifact::kVelocity), {ModelKind::kVelocity, dim, res.model.velocity_net()});
  write_checkpoint(in_out(cfg, artifact::kScore), {ModelKind::kScore, dim, res.model.score_net()});
  io::write_file_atomic(in_out(cfg, artifact::kLosses), format_loss_trace(res.trace));
  std::ostringstream sum;
  sum << "trained " << res.trace.size() << " iterations";
  if (!res.trace.empty()) sum << ", final velocity loss " << io::format_real(res.trace.back().velocity);
  sum << "\n";
  return {sum.str(), true};
}

std::unique_ptr<TransportModel> load_transport(const ExperimentConfig& cfg, const EnergySystem& a,
                                               const EnergySystem& b) {
  std::unique_ptr<TransportModel> model;
  const std::string& kind = cfg.transport.model;
  if (kind == "zero") {
    model = make_zero_transport(a.dim());
  } else if (kind == "analytic") {
    model = std::make_unique<AnalyticMixtureTransport>(mixture_from_system(a), mixture_from_system(b),
                                                       cfg.train.schedule);
  } else {
    for (const char* name : {artifact::kVelocity, artifact::kScore}) {
      if (!std::filesystem::exists(in_out(cfg, name))) {
        throw ConfigError("missing artifact " + in_out(cfg, name).string() + " (run 'train' first)",
                          "missing-artifact");
      }
    }
    Checkpoint v = read_checkpoint(in_out(cfg, artifact::kVelocity));
    Checkpoint s = read_checkpoint(in_out(cfg, artifact::kScore));
    if (v.kind != ModelKind::kVelocity || s.kind != ModelKind::kScore) {
      throw ConfigError("checkpoint kinds do not match their file names", "bad-checkpoint");
    }
    model = std::make_unique<NeuralTransport>(std::move(v.net), std::move(s.net), cfg.train.schedule);
  }
  require_dim(model->dim(), a.dim(), "transport dimension");
  model->set_sigma(cfg.transport.sigma);
  return model;
}

WorkLedger simulate_ledger(const TransportModel& model, const EnergySystem& a, const EnergySystem& b,
                           const SampleSet& set_a, const SampleSet& set_b, const TransportSpec& spec,
                           std::uint64_t seed) {
  const TimeGrid grid = TimeGrid::uniform(spec.steps);
  EnsembleOptions opt;
  opt.block = spec.block;
  opt.threads = spec.threads;
  opt.divergence.probes = spec.probes;
  WorkLedger ledger;
  const std::uint64_t pseed = derive_seed(seed, seed_label::kPathing);
  const Matrix fwd = select_starts(set_a, spec.paths, derive_seed(pseed, "starts", 0));
  const Matrix bwd = select_starts(set_b, spec.paths, derive_seed(pseed, "starts", 1));
  ledger.add(Direction::kForward, simulate_works(model, grid, Direction::kForward, fwd, a, b, pseed, opt));
  ledger.add(Direction::kBackward, simulate_works(model, grid, Direction::kBackward, bwd, a, b, pseed, opt));
  ledger.provenance["steps"] = std::to_string(spec.steps);
  ledger.provenance["sigma"] = io::format_real(spec.sigma);
  ledger.provenance["paths"] = std::to_string(spec.paths);
  if (spec.sigma == 0.0 && a.dim() > opt.divergence.exact_max_dim) {
    ledger.provenance["hutchinson_probes"] = std::to_string(spec.probes);
  }
  return ledger;
}

StageOutcome run_work(const ExperimentConfig& cfg) {
  ensure_out(cfg);
  const EnergySystem a = build_system(cfg.system_a);
  const EnergySystem b = build_system(cfg.system_b);
  const SampleSet sa = read_required_samples(in_out(cfg, artifact::kSamplesA));
  const SampleSet sb = read_required_samples(in_out(cfg, artifact::kSamplesB));
  const auto model = load_transport(cfg, a, b);
  WorkLedger ledger = simulate_ledger(*model, a, b, sa, sb, cfg.transport, cfg.seed);
  ledger.provenance["model"] = cfg.transport.model;
  if (cfg.transport.model == "learned") {
    ledger.provenance["model_velocity"] = io::git_blob_hash(io::read_file(in_out(cfg, artifact::kVelocity)));
    ledger.provenance["model_score"] = io::git_blob_hash(io::read_file(in_out(cfg, artifact::kScore)));
  }
  write_works(in_out(cfg, artifact::kWorks), ledger);
  std::ostringstream sum;
  sum << "wrote " << in_out(cfg, artifact::kWorks).string() << " (" << ledger.forward.size() << " forward, "
      << ledger.backward.size() << " backward valid paths";
  if (ledger.dropped_forward + ledger.dropped_backward > 0) {
    sum << ", " << ledger.dropped_forward + ledger.dropped_backward << " dropped";
  }
  sum << ")\n";
  if (ledger.drop_flag()) sum << "warning: invalid-path rate above 0.1%\n";
  return {sum.str(), true};
}

std::optional<double> reference_delta_f(const EnergySystem& a, const EnergySystem& b) {
  const auto za = a.log_partition_analytic();
  const auto zb = b.log_partition_analytic();
  if (!za || !zb) return std::nullopt;
  return *za - *zb;
}

StageOutcome run_estimate(const ExperimentConfig& cfg) {
  ensure_out(cfg);
  const auto works_path = in_out(cfg, artifact::kWorks);
  if (!std::filesystem::exists(works_path)) {
    throw ConfigError("missing artifact " + works_path.string() + " (run 'work' first)", "missing-artifact");
  }
  const WorkLedger ledger = read_works(works_path);
  if (ledger.forward.empty() && ledger.backward.empty()) {
    throw ConfigError("work file holds no valid works", "empty-ledger");
  }
  EstimateReport rep = estimate_from_ledger(ledger, cfg.bootstrap, cfg.seed);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (const auto ref = reference_delta_f(build_system(cfg.system_a), build_system(cfg.system_b))) {
    rep.rows.push_back({"reference", *ref, 0.0, 0, "analytic"});
  }
  for (const char* key : {"model_velocity", "model_score"}) {
    const auto it = ledger.provenance.find(key);
    if (it != ledger.provenance.end()) rep.rows.push_back({key, nan, nan, 0, "sha1=" + it->second});
  }
  const auto model = ledger.provenance.find("model");
  if (model != ledger.provenance.end()) rep.rows.push_back({"model", nan, nan, 0, "kind=" + model->second});

  io::write_file_atomic(in_out(cfg, artifact::kReport), format_report_csv(rep));
  std::ostringstream summary;
  summary << format_report_summary(rep);
  if (!ledger.provenance.empty()) {
    summary << "provenance\n";
    for (const auto& [k, v] : ledger.provenance) summary << "  " << k << " = " << v << "\n";
  }
  io::write_file_atomic(in_out(cfg, artifact::kSummary), summary.str());
  return {summary.str(), true};
}

EstimateReport parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  EstimateReport rep;
  long line_no = 0;
  if (!std::getline(in, line) || line != "estimator,value,std,iters,flags") {
    throw ParseError("report header must be 'estimator,value,std,iters,flags'", 1);
  }
  ++line_no;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = io::split(line, ',');
    if (f.size() != 5) throw ParseError("expected 5 fields", line_no);
    const auto value = io::parse_real(f[1]);
    const auto sd = io::parse_real(f[2]);
    const auto it = io::parse_integer(f[3]);
    if (!value || !sd || !it) throw ParseError("malformed report row", line_no);
    rep.rows.push_back({std::string(f[0]), *value, *sd, static_cast<int>(*it), std::string(f[4])});
  }
  return rep;
}

StageOutcome run_reweight(const ExperimentConfig& cfg) {
  ensure_out(cfg);
  if (!cfg.system_a.umbrella || !cfg.system_b.umbrella) {
    throw ConfigError("reweighting needs umbrella parameters on both systems", "missing-umbrella");
  }
  const auto report_path = in_out(cfg, artifact::kReport);
  if (!std::filesystem::exists(report_path)) {
    throw ConfigError("missing artifact " + report_path.string() + " (run 'estimate' first)", "missing-artifact");
  }
  const EstimateReport rep = parse_report_csv(io::read_file(report_path));
  const EstimateRow* row = rep.find("min_variance");
  if (!row) row = rep.find("iwae_forward");
  if (!row) throw ConfigError("report has no usable free-energy estimate", "empty-ledger");
  const SampleSet sa = read_required_samples(in_out(cfg, artifact::kSamplesA));
  const SampleSet sb = read_required_samples(in_out(cfg, artifact::kSamplesB));
  auto magnetization = [](const SampleSet& s) {
    std::vector<double> m(s.size());
    for (Eigen::Index j = 0; j < s.size(); ++j) m[j] = s.samples.col(j).mean();
    return m;
  };
  const ReweightSpec& rw = cfg.reweight;
  const Histogram ha = histogram(magnetization(sa), rw.lo, rw.hi, rw.bins);
  const Histogram hb = histogram(magnetization(sb), rw.lo, rw.hi, rw.bins);
  const Vector p = umbrella_reweight(ha, hb, 0.0, row->value, *cfg.system_a.umbrella, *cfg.system_b.umbrella);
  std::ostringstream csv;
  csv << "xi,count_a,count_b,probability\n";
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    csv << io::format_real(ha.centers(i)) << ',' << io::format_real(ha.counts(i)) << ','
        << io::format_real(hb.counts(i)) << ',' << io::format_real(p(i)) << '\n';
  }
  io::write_file_atomic(in_out(cfg, artifact::kHistogram), csv.str());
  std::ostringstream sum;
  sum << "wrote " << in_out(cfg, artifact::kHistogram).string() << " using dF = " << io::format_real(row->value)
      << " (" << row->estimator << ")\n";
  if (std::abs(rw.lo + rw.hi) < 1e-12) sum << "symmetry metric " << io::format_real(symmetry_metric(p)) << "\n";
  return {sum.str(), true};
}

StageOutcome run_gradcheck(const ExperimentConfig& cfg) {
  std::vector<GradCheckRow> rows = check_autodiff(100, derive_seed(cfg.seed, "gradcheck"));
  int k = 0;
  for (const auto* spec : {&cfg.system_a, &cfg.system_b}) {
    const EnergySystem sys = build_system(*spec);
    Vector center = Vector::Constant(sys.dim(), spec->init);
    double spread = 1.0;
    if (sys.kind() == "lj-cluster") {
      center = lj_initial_configuration(spec->lj, derive_seed(cfg.seed, "gradcheck-lattice", k));
      spread = 0.05;
    }
    rows.push_back(check_energy_gradient(std::string(k ? "energy-b-" : "energy-a-") + sys.kind(), sys, center,
                                         spread, 100, derive_seed(cfg.seed, "gradcheck", 1 + k)));
    ++k;
  }
  const bool ok = std::all_of(rows.begin(), rows.end(), [](const GradCheckRow& r) { return r.pass(); });
  return {format_gradcheck(rows), ok};
}

StageOutcome run_oracle(ExperimentConfig cfg) {
  cfg.transport.model = "analytic";
  StageOutcome s = run_sample(cfg);
  StageOutcome w = run_work(cfg);
  StageOutcome e = run_estimate(cfg);
  return {s.summary + w.summary + e.summary, true};
}

}  // namespace feat
