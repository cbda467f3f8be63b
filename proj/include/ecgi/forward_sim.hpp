#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ecgi/rng.hpp"

namespace ecgi {

// Linear map from heart-surface potentials to torso potentials, together
// with the synthetic electrode geometry it was built from.
struct TransferOperator {
  Eigen::MatrixXd a;                // N_b x N_h, finite and positive
  Eigen::MatrixXd heart_positions;  // N_h x 3, on the unit sphere
  Eigen::MatrixXd torso_positions;  // N_b x 3, near the radius-3 sphere

  int n_heart() const { return static_cast<int>(a.cols()); }
  int n_torso() const { return static_cast<int>(a.rows()); }
};

// One paced beat of epicardial potentials, N_h x T in millivolts.
struct EpicardialBeat {
  Eigen::MatrixXd potentials;
  int pacing_site = 0;
  int heart_id = 0;
  bool truncated = false;  // some activation delay fell beyond T
};

// Simulated torso observation of a beat, N_b x T in millivolts.
struct BodySurfaceRecord {
  Eigen::MatrixXd potentials;
  double snr_db = 0.0;
  std::uint64_t noise_seed = 0;
};

struct BeatPair {
  EpicardialBeat x;
  BodySurfaceRecord y;
};

struct DatasetSplit {
  std::vector<BeatPair> train, validation, test;
  std::string policy;
};

// Action-potential template and conduction parameters for paced beats.
struct BeatParams {
  double amplitude_mv = 30.0;
  double amp_jitter = 0.1;            // relative per-node amplitude spread
  double conduction_slowness = 8.0;   // samples of delay per unit geodesic distance
  int upstroke_samples = 2;
  int plateau_samples = 12;
  double repol_tau = 8.0;             // samples
};

struct DatasetConfig {
  int hearts = 6;
  int beats_per_heart = 48;
  int n_h = 24;
  int n_b = 12;
  int t_len = 64;
  int pacing_sites = 8;   // per heart
  int test_hearts = 1;    // entire hearts held out for the test split
  double snr_db = 20.0;
  double val_fraction = 0.2;
  std::uint64_t seed = 42;
  BeatParams beat;
};

// Quasi-uniform heart nodes on the unit sphere, jittered torso nodes on the
// concentric radius-3 sphere, inverse-square gain kernel normalized to unit
// mean row sum. Throws ConfigError on invalid counts and NumericError if the
// operator is row-rank-deficient (checked when N_b <= N_h).
TransferOperator synth_transfer_matrix(int n_b, int n_h, std::uint64_t seed);

// Great-circle distance from `site` to every heart node.
Eigen::VectorXd geodesic_from(const TransferOperator& geom, int site);

// Shared action-potential template delayed by conduction distance from the
// pacing site, with per-node amplitude jitter.
EpicardialBeat synth_epicardial_beat(const TransferOperator& geom, int pacing_site, int t_len,
                                     const BeatParams& params, Rng& rng);

// y = A x + noise scaled for the requested global SNR. snr_db = +inf means
// noiseless; any other non-finite value is a contract error.
BodySurfaceRecord apply_forward(const TransferOperator& op, const EpicardialBeat& x, double snr_db,
                                Rng& rng);

// Leave-hearts-out dataset: the last `test_hearts` hearts are reserved for
// testing; validation is a seeded fraction of the remaining beats.
DatasetSplit make_dataset(const DatasetConfig& config);

// Per-heart transfer operators for a dataset configuration (heart h of the
// generated dataset used operator(h)).
TransferOperator heart_operator(const DatasetConfig& config, int heart_id);

// Throws if the split violates heart disjointness or shape consistency.
void audit_split(const DatasetSplit& split);

// Dataset container: magic "ECGD", version u32, header (N_h, N_b, T u32,
// snr_db f64, per-split counts u32), then per pair heart_id u32,
// pacing_site u32, flags u32, x then y as little-endian f64 row-major.
std::string serialize_dataset(const DatasetSplit& split);
DatasetSplit deserialize_dataset(const std::string& bytes);
void save_dataset(const DatasetSplit& split, const std::string& path);
DatasetSplit load_dataset(const std::string& path);

// FNV-1a over the serialized container; the split fingerprint.
std::uint64_t dataset_checksum(const DatasetSplit& split);

}  // namespace ecgi
