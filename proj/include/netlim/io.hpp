#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "netlim/convergence.hpp"
#include "netlim/limit_law.hpp"
#include "netlim/network.hpp"

namespace netlim {

// ---------------------------------------------------------------------------
// JSON documents.  All readers throw ConfigError naming the offending field.

nlohmann::json params_to_json(const ModelParams& p);
ModelParams params_from_json(const nlohmann::json& j);

/// Document version "limitlaw-v1": generating params (provenance), c as an
/// array over s = 1..T, K and M as arrays of {lag, matrix} records with the
/// matrix stored row-major over indices 1..T.
nlohmann::json law_to_json(const LimitLaw& law);
LimitLaw law_from_json(const nlohmann::json& j);

/// Mirrors the limit-law layout (c array, {lag, matrix} records) so the two
/// files diff directly; adds the population radius and the per-time pools.
nlohmann::json stats_to_json(const EmpiricalStats& st);
EmpiricalStats stats_from_json(const nlohmann::json& j);

nlohmann::json report_to_json(const DistanceReport& rep);

/// CSV with one row per (n, trial, metric); trial -1 marks trial-pooled
/// aggregates, metric names carry lag/time suffixes.
std::string report_to_csv(const DistanceReport& rep);

/// Two-column x,y text files (x = torus size 2n+1), one per summary metric,
/// named <stem>_<metric>.dat inside dir.  Returns the paths written.
std::vector<std::string> write_plot_files(const std::string& dir, const std::string& stem,
                                          const DistanceReport& rep);

// ---------------------------------------------------------------------------
// Trajectory ensembles.  Readers recover u only (noise and currents are
// in-memory artifacts); the CSV columns are trial, neuron, time, u with the
// signed neuron index -n..n.

void write_ensemble_csv(const std::string& path, const std::vector<TrajectoryEnsemble>& trials,
                        int n);
std::vector<TrajectoryEnsemble> read_ensemble_csv(const std::string& path);

/// Binary layout: 16-byte header (magic "NSIM", u32 version = 1, u32 n,
/// u32 T), then per trial the (2n+1) x (T+1) matrix of u values row-major,
/// native-endian doubles.  Trial count is implied by the file size.
void write_ensemble_binary(const std::string& path,
                           const std::vector<TrajectoryEnsemble>& trials, int n);
std::vector<TrajectoryEnsemble> read_ensemble_binary(const std::string& path);

// ---------------------------------------------------------------------------
// Run configuration: one JSON file drives every command; commands read their
// own subsection.  NETLIM_SEED / NETLIM_THREADS override the file, CLI flags
// override both.

struct SimulateOptions {
    int n = 4;
    int trials = 1;
    int k_max = 1;
    WeightMethod method = WeightMethod::FftTorus;
    std::string format = "csv";  // csv | binary
};

struct ConvergeOptions {
    std::string experiment = "averaged";  // averaged | quenched | ergodic
    ExperimentPlan plan;
    std::string law_file;  // optional precomputed limit-law document
    bool plots = false;
};

struct OracleOptions {
    std::int64_t samples = 1000000;
    std::string law_file;
};

struct RunConfig {
    ModelParams params;
    QuadratureConfig quad;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_dir = ".";
    SimulateOptions simulate;
    ConvergeOptions converge;
    OracleOptions oracle;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& rc);

/// Parses the file and applies NETLIM_SEED / NETLIM_THREADS.
RunConfig load_run_config(const std::string& path);

// ---------------------------------------------------------------------------
// File helpers.

std::string read_file(const std::string& path);
/// Writes through a temp file in the same directory, then renames.
void atomic_write(const std::string& path, const std::string& contents);

} // namespace netlim
