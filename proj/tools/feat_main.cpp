// feat <subcommand> --config <path> [--set section.key=value]... [--out <dir>]

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "feat/pipeline.hpp"

namespace {

int fail(const std::string& code, const std::string& detail, int exit_code) {
  std::string flat = detail;
  for (char& c : flat) {
    if (c == '\n') c = ' ';
  }
  std::cerr << "feat: error=" << code << " detail=" << flat << "\n";
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Free-energy estimation with learned stochastic-interpolant transport"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"sample", "draw endpoint samples"},
      {"train", "train the velocity and score networks"},
      {"work", "simulate forward and backward paths and record their works"},
      {"estimate", "apply every estimator to the work file"},
      {"reweight", "reweight umbrella samples into a magnetization histogram"},
      {"gradcheck", "check analytic and reverse-mode gradients against finite differences"},
      {"oracle", "sample, work and estimate with the analytic transport"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "experiment config (INI)")->required();
    sub->add_option("--set", overrides, "override, section.key=value (repeatable)");
    sub->add_option("--out", out_dir, "output directory (overrides run.out)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    feat::ExperimentConfig cfg = feat::load_config(config_path, overrides);
    if (!out_dir.empty()) cfg.out = out_dir;
    feat::StageOutcome res;
    if (name == "sample") res = feat::run_sample(cfg);
    else if (name == "train") res = feat::run_train(cfg);
    else if (name == "work") res = feat::run_work(cfg);
    else if (name == "estimate") res = feat::run_estimate(cfg);
    else if (name == "reweight") res = feat::run_reweight(cfg);
    else if (name == "gradcheck") res = feat::run_gradcheck(cfg);
    else res = feat::run_oracle(cfg);
    std::cout << res.summary;
    if (!res.ok) return fail("check-failed", name + " reported failures", 3);
    return 0;
  } catch (const feat::NumericalError& e) {
    return fail(e.code(), e.what(), 3);
  } catch (const feat::Error& e) {
    return fail(e.code(), e.what(), 2);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 2);
  }
}
