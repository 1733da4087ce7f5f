#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "feat/interpolant.hpp"
#include "feat/sampling.hpp"
#include "feat/systems.hpp"

namespace feat {

struct SystemSpec {
  std::string kind;
  int dim = 1;
  std::vector<double> mean;      // gaussian; one value broadcasts
  std::vector<double> variance;  // gaussian; one value broadcasts
  int components = 16;           // gmm
  double component_std = 0.0;    // gmm; 0 selects softplus(-3)
  std::uint64_t gmm_seed = 0;
  DoubleWellParams double_well;
  LjClusterParams lj;
  Phi4Params phi4;
  std::optional<Umbrella> umbrella;
  double init = 0.0;  // constant starting value of MALA chains
};

struct SamplerSpec {
  std::string method = "auto";  // auto | exact | mala
  long count = 10000;           // kept samples
  MalaConfig mala;              // steps derived from count when mala.steps == 0
};

struct TransportSpec {
  std::string model = "learned";  // learned | analytic | zero
  double sigma = 0.2;
  int steps = 500;
  long paths = 2000;
  int threads = 1;
  int block = 256;
  int probes = 1;
};

struct ReweightSpec {
  double lo = -1.5;
  double hi = 1.5;
  int bins = 30;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  SystemSpec system_a;
  SystemSpec system_b;
  SamplerSpec sampler;
  TrainConfig train;
  TransportSpec transport;
  int bootstrap = 200;
  ReweightSpec reweight;
};

/// `section.key=value` overrides applied after the file is read.
ExperimentConfig parse_config(const std::string& ini_text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

EnergySystem build_system(const SystemSpec& spec);

}  // namespace feat
