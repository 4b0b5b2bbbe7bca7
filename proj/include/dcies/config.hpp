#pragma once

// Experiment configuration read from a TOML file. Every key has a default;
// see README.md for the schema.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dcies/importance.hpp"
#include "dcies/io.hpp"
#include "dcies/probes.hpp"
#include "dcies/synthetic.hpp"

namespace dcies {

/// A representation is either generated from the synthetic factors by a
/// mixing, or read from dataset files.
struct RepresentationSource {
  std::string name;
  std::optional<MixingSpec> mixing;
  std::optional<io::DatasetFiles> files;
};

struct DownstreamConfig {
  bool enabled = false;
  std::vector<ProbeClass> probes{ProbeClass::mlp, ProbeClass::rf};
  int n_reg = -1;  // -1: K tasks
  int n_cls = -1;
  int rf_depth = 10;
  bool cross_pairing = false;
};

/// Which ladder rung supplies the probes used for the importance matrix.
struct ImportanceCapacity {
  bool best = true;
  std::size_t index = 0;
};

struct ExperimentConfig {
  std::vector<RepresentationSource> representations;
  std::vector<ProbeClass> probes{ProbeClass::mlp, ProbeClass::rf};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<CapacityScale> capacity_scales{CapacityScale::natural};
  SyntheticConfig synthetic;
  LadderConfig ladder;
  TrainingConfig training;
  ImportanceConfig importance;
  DownstreamConfig downstream;
  ImportanceCapacity importance_capacity;
  double loss_floor = 0.0;
  double verdict_tol = 0.05;
  std::filesystem::path output_dir = "dcies-out";

  /// Throws ConfigError on an empty representation, probe or seed list, and
  /// on dataset files that do not exist.
  void validate() const;
};

/// Factor layout of the MPI3D-like synthetic default: seven factors with
/// cardinalities 6, 6, 2, 3, 3, 40, 40.
std::vector<FactorSpec> mpi3d_like_factors();

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace dcies
