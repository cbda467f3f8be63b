#include "ecgi/forward_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ecgi/errors.hpp"
#include "ecgi/io_util.hpp"
#include "ecgi/svd.hpp"

namespace ecgi {

namespace {

constexpr double kTorsoRadius = 3.0;
constexpr double kTorsoJitterSd = 0.25;
constexpr double kMinTorsoRadius = 2.0;

Eigen::MatrixXd fibonacci_sphere(int n, double radius) {
  Eigen::MatrixXd pts(n, 3);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    double z = n == 1 ? 0.0 : 1.0 - 2.0 * (i + 0.5) / n;
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double a = golden * i;
    pts(i, 0) = radius * r * std::cos(a);
    pts(i, 1) = radius * r * std::sin(a);
    pts(i, 2) = radius * z;
  }
  return pts;
}

double beat_template(double u, double amp, const BeatParams& p) {
  if (u < 0) return 0.0;
  if (u < p.upstroke_samples) return amp * (u + 1.0) / p.upstroke_samples;
  double v = u - p.upstroke_samples;
  if (v < p.plateau_samples) return amp;
  return amp * std::exp(-(v - p.plateau_samples) / p.repol_tau);
}

void write_pair(ByteWriter& w, const BeatPair& p) {
  w.u32(static_cast<std::uint32_t>(p.x.heart_id));
  w.u32(static_cast<std::uint32_t>(p.x.pacing_site));
  w.u32(p.x.truncated ? 1u : 0u);
  const Eigen::MatrixXd& x = p.x.potentials;
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) w.f64(x(i, j));
  const Eigen::MatrixXd& y = p.y.potentials;
  for (int i = 0; i < y.rows(); ++i)
    for (int j = 0; j < y.cols(); ++j) w.f64(y(i, j));
}

BeatPair read_pair(ByteReader& r, int n_h, int n_b, int t_len, double snr_db) {
  BeatPair p;
  p.x.heart_id = static_cast<int>(r.u32());
  p.x.pacing_site = static_cast<int>(r.u32());
  p.x.truncated = (r.u32() & 1u) != 0;
  p.x.potentials.resize(n_h, t_len);
  for (int i = 0; i < n_h; ++i)
    for (int j = 0; j < t_len; ++j) p.x.potentials(i, j) = r.f64();
  p.y.potentials.resize(n_b, t_len);
  for (int i = 0; i < n_b; ++i)
    for (int j = 0; j < t_len; ++j) p.y.potentials(i, j) = r.f64();
  p.y.snr_db = snr_db;
  p.y.noise_seed = 0;
  return p;
}

constexpr char kMagic[4] = {'E', 'C', 'G', 'D'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

TransferOperator synth_transfer_matrix(int n_b, int n_h, std::uint64_t seed) {
  if (n_b < 1 || n_h < 1) {
    throw ConfigError("synth_transfer_matrix: counts must be positive, got n_b=" +
                      std::to_string(n_b) + " n_h=" + std::to_string(n_h));
  }
  TransferOperator op;
  op.heart_positions = fibonacci_sphere(n_h, 1.0);
  op.torso_positions = fibonacci_sphere(n_b, kTorsoRadius);

  Rng rng = Rng(seed).child({0x746f72736fULL});  // torso jitter stream
  for (int i = 0; i < n_b; ++i) {
    for (int j = 0; j < 3; ++j) op.torso_positions(i, j) += kTorsoJitterSd * rng.normal();
    // Keep electrodes strictly outside the heart sphere.
    double r = op.torso_positions.row(i).norm();
    if (r < kMinTorsoRadius) op.torso_positions.row(i) *= kMinTorsoRadius / r;
  }

  op.a.resize(n_b, n_h);
  for (int i = 0; i < n_b; ++i) {
    for (int j = 0; j < n_h; ++j) {
      double d2 = (op.torso_positions.row(i) - op.heart_positions.row(j)).squaredNorm();
      op.a(i, j) = 1.0 / d2;
    }
  }
  op.a *= static_cast<double>(n_b) / op.a.sum();  // mean row sum = 1

  if (!op.a.allFinite()) throw NumericError("synth_transfer_matrix: non-finite operator");
  if (n_b <= n_h) {
    SvdFactors f = jacobi_svd(op.a);
    if (f.rank() < n_b || f.sigma[f.rank() - 1] <= 1e-10 * f.sigma[0]) {
      throw NumericError("synth_transfer_matrix: operator is row-rank-deficient");
    }
  }
  return op;
}

Eigen::VectorXd geodesic_from(const TransferOperator& geom, int site) {
  const int n = geom.n_heart();
  if (site < 0 || site >= n) {
    throw ContractError("geodesic_from: site " + std::to_string(site) + " out of range [0, " +
                        std::to_string(n) + ")");
  }
  Eigen::VectorXd d(n);
  Eigen::Vector3d u = geom.heart_positions.row(site).normalized();
  for (int j = 0; j < n; ++j) {
    Eigen::Vector3d w = geom.heart_positions.row(j).normalized();
    double c = std::clamp(u.dot(w), -1.0, 1.0);
    d[j] = std::acos(c);
  }
  return d;
}

EpicardialBeat synth_epicardial_beat(const TransferOperator& geom, int pacing_site, int t_len,
                                     const BeatParams& params, Rng& rng) {
  if (t_len < 16) throw ContractError("synth_epicardial_beat: T must be at least 16");
  const int n_h = geom.n_heart();
  if (pacing_site < 0 || pacing_site >= n_h) {
    throw ContractError("synth_epicardial_beat: pacing site " + std::to_string(pacing_site) +
                        " out of range [0, " + std::to_string(n_h) + ")");
  }

  EpicardialBeat beat;
  beat.pacing_site = pacing_site;
  beat.potentials.resize(n_h, t_len);
  Eigen::VectorXd dist = geodesic_from(geom, pacing_site);
  for (int j = 0; j < n_h; ++j) {
    long delay = std::lround(params.conduction_slowness * dist[j]);
    if (delay >= t_len) beat.truncated = true;
    double amp = params.amplitude_mv * (1.0 + params.amp_jitter * rng.normal());
    for (int t = 0; t < t_len; ++t) {
      beat.potentials(j, t) = beat_template(static_cast<double>(t - delay), amp, params);
    }
  }
  if (!beat.potentials.allFinite()) throw NumericError("synth_epicardial_beat: non-finite beat");
  return beat;
}

BodySurfaceRecord apply_forward(const TransferOperator& op, const EpicardialBeat& x, double snr_db,
                                Rng& rng) {
  if (op.a.cols() != x.potentials.rows()) {
    throw DimensionError("apply_forward: operator expects " + std::to_string(op.a.cols()) +
                         " heart nodes, beat has " + std::to_string(x.potentials.rows()));
  }
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
    throw ContractError("apply_forward: snr_db must be finite or +inf");
  }

  BodySurfaceRecord rec;
  rec.snr_db = snr_db;
  rec.noise_seed = rng.seed();
  rec.potentials = op.a * x.potentials;
  if (std::isfinite(snr_db)) {
    double p_clean = rec.potentials.array().square().mean();
    double sigma = std::sqrt(p_clean / std::pow(10.0, snr_db / 10.0));
    for (int i = 0; i < rec.potentials.rows(); ++i)
      for (int t = 0; t < rec.potentials.cols(); ++t) rec.potentials(i, t) += sigma * rng.normal();
  }
  if (!rec.potentials.allFinite()) throw NumericError("apply_forward: non-finite record");
  return rec;
}

TransferOperator heart_operator(const DatasetConfig& config, int heart_id) {
  return synth_transfer_matrix(config.n_b, config.n_h,
                               Rng(config.seed).child({0x6f70, static_cast<std::uint64_t>(heart_id)}).seed());
}

DatasetSplit make_dataset(const DatasetConfig& c) {
  if (c.hearts < 1) throw ConfigError("make_dataset: need at least one heart");
  if (c.test_hearts < 0 || c.test_hearts >= c.hearts) {
    throw ConfigError("make_dataset: test_hearts must be in [0, hearts)");
  }
  if (c.test_hearts >= 1 && c.hearts < 2) {
    throw ConfigError("make_dataset: a test split requires at least 2 hearts");
  }
  if (c.beats_per_heart < 1 || c.pacing_sites < 1) {
    throw ConfigError("make_dataset: beats_per_heart and pacing_sites must be positive");
  }
  if (c.pacing_sites > c.n_h) {
    throw ConfigError("make_dataset: more pacing sites than heart nodes");
  }
  if (c.val_fraction < 0.0 || c.val_fraction >= 1.0) {
    throw ConfigError("make_dataset: val_fraction must be in [0, 1)");
  }

  Rng master(c.seed);
  std::vector<BeatPair> trainval, test;
  for (int h = 0; h < c.hearts; ++h) {
    TransferOperator op = heart_operator(c, h);

    // Per-heart pacing-site set: a seeded draw of distinct node indices.
    std::vector<int> nodes(static_cast<size_t>(c.n_h));
    std::iota(nodes.begin(), nodes.end(), 0);
    Rng site_rng = master.child({0x73697465ULL, static_cast<std::uint64_t>(h)});
    for (size_t i = nodes.size() - 1; i > 0; --i) {
      std::swap(nodes[i], nodes[static_cast<size_t>(site_rng.uniform_int(0, static_cast<int>(i)))]);
    }
    nodes.resize(static_cast<size_t>(c.pacing_sites));

    bool is_test = h >= c.hearts - c.test_hearts;
    for (int b = 0; b < c.beats_per_heart; ++b) {
      Rng beat_rng = master.child({0x62656174ULL, static_cast<std::uint64_t>(h),
                                   static_cast<std::uint64_t>(b)});
      Rng noise_rng = master.child({0x6e6f6973ULL, static_cast<std::uint64_t>(h),
                                    static_cast<std::uint64_t>(b)});
      BeatPair p;
      p.x = synth_epicardial_beat(op, nodes[static_cast<size_t>(b % c.pacing_sites)], c.t_len,
                                  c.beat, beat_rng);
      p.x.heart_id = h;
      p.y = apply_forward(op, p.x, c.snr_db, noise_rng);
      (is_test ? test : trainval).push_back(std::move(p));
    }
  }

  // Validation is a seeded fraction of the training hearts' beats.
  const int n_val = static_cast<int>(std::lround(c.val_fraction * static_cast<double>(trainval.size())));
  std::vector<int> order(trainval.size());
  std::iota(order.begin(), order.end(), 0);
  Rng val_rng = master.child({0x76616cULL});
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<size_t>(val_rng.uniform_int(0, static_cast<int>(i) - 1))]);
  }
  std::vector<bool> in_val(trainval.size(), false);
  for (int i = 0; i < n_val; ++i) in_val[static_cast<size_t>(order[static_cast<size_t>(i)])] = true;

  DatasetSplit split;
  for (size_t i = 0; i < trainval.size(); ++i) {
    (in_val[i] ? split.validation : split.train).push_back(std::move(trainval[i]));
  }
  split.test = std::move(test);
  split.policy = "leave-hearts-out: hearts=" + std::to_string(c.hearts) +
                 " test_hearts=" + std::to_string(c.test_hearts) +
                 " val_fraction=" + std::to_string(c.val_fraction) +
                 " seed=" + std::to_string(c.seed);
  audit_split(split);
  return split;
}

void audit_split(const DatasetSplit& split) {
  auto check_pairs = [](const std::vector<BeatPair>& pairs, const char* name, int& n_h, int& n_b,
                        int& t_len) {
    for (const BeatPair& p : pairs) {
      if (n_h < 0) {
        n_h = static_cast<int>(p.x.potentials.rows());
        n_b = static_cast<int>(p.y.potentials.rows());
        t_len = static_cast<int>(p.x.potentials.cols());
      }
      if (p.x.potentials.rows() != n_h || p.y.potentials.rows() != n_b ||
          p.x.potentials.cols() != t_len || p.y.potentials.cols() != t_len) {
        throw ConfigError(std::string("audit_split: inconsistent shapes in ") + name);
      }
    }
  };
  int n_h = -1, n_b = -1, t_len = -1;
  check_pairs(split.train, "train", n_h, n_b, t_len);
  check_pairs(split.validation, "validation", n_h, n_b, t_len);
  check_pairs(split.test, "test", n_h, n_b, t_len);

  std::vector<int> train_hearts, test_hearts;
  for (const BeatPair& p : split.train) train_hearts.push_back(p.x.heart_id);
  for (const BeatPair& p : split.validation) train_hearts.push_back(p.x.heart_id);
  for (const BeatPair& p : split.test) test_hearts.push_back(p.x.heart_id);
  for (int t : test_hearts) {
    if (std::find(train_hearts.begin(), train_hearts.end(), t) != train_hearts.end()) {
      throw ConfigError("audit_split: heart " + std::to_string(t) +
                        " appears in both test and train/validation");
    }
  }
}

std::string serialize_dataset(const DatasetSplit& split) {
  int n_h = 0, n_b = 0, t_len = 0;
  double snr = 0.0;
  const BeatPair* first = nullptr;
  if (!split.train.empty()) first = &split.train.front();
  else if (!split.validation.empty()) first = &split.validation.front();
  else if (!split.test.empty()) first = &split.test.front();
  if (first) {
    n_h = static_cast<int>(first->x.potentials.rows());
    n_b = static_cast<int>(first->y.potentials.rows());
    t_len = static_cast<int>(first->x.potentials.cols());
    snr = first->y.snr_db;
  }

  ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(n_h));
  w.u32(static_cast<std::uint32_t>(n_b));
  w.u32(static_cast<std::uint32_t>(t_len));
  w.f64(snr);
  w.u32(static_cast<std::uint32_t>(split.train.size()));
  w.u32(static_cast<std::uint32_t>(split.validation.size()));
  w.u32(static_cast<std::uint32_t>(split.test.size()));
  for (const BeatPair& p : split.train) write_pair(w, p);
  for (const BeatPair& p : split.validation) write_pair(w, p);
  for (const BeatPair& p : split.test) write_pair(w, p);
  return w.bytes();
}

DatasetSplit deserialize_dataset(const std::string& bytes) {
  ByteReader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw FormatError("dataset: bad magic, expected ECGD");
  std::uint32_t version = r.u32();
  if (version != kVersion) throw FormatError("dataset: unsupported version " + std::to_string(version));
  int n_h = static_cast<int>(r.u32());
  int n_b = static_cast<int>(r.u32());
  int t_len = static_cast<int>(r.u32());
  double snr = r.f64();
  std::uint32_t n_train = r.u32(), n_val = r.u32(), n_test = r.u32();

  DatasetSplit split;
  for (std::uint32_t i = 0; i < n_train; ++i) split.train.push_back(read_pair(r, n_h, n_b, t_len, snr));
  for (std::uint32_t i = 0; i < n_val; ++i) split.validation.push_back(read_pair(r, n_h, n_b, t_len, snr));
  for (std::uint32_t i = 0; i < n_test; ++i) split.test.push_back(read_pair(r, n_h, n_b, t_len, snr));
  if (!r.exhausted()) {
    throw FormatError("dataset: " + std::to_string(r.remaining()) + " trailing bytes");
  }
  split.policy = "loaded: train=" + std::to_string(n_train) + " val=" + std::to_string(n_val) +
                 " test=" + std::to_string(n_test);
  return split;
}

void save_dataset(const DatasetSplit& split, const std::string& path) {
  write_file(path, serialize_dataset(split));
}

DatasetSplit load_dataset(const std::string& path) { return deserialize_dataset(read_file(path)); }

std::uint64_t dataset_checksum(const DatasetSplit& split) {
  return fnv1a64(serialize_dataset(split));
}

}  // namespace ecgi
