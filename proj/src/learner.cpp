#include "racer/learner.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "racer/rng.hpp"

namespace racer {

void LearnerConfig::validate() const {
  require(rays >= 3, Errc::bad_config, "need at least 3 rays");
  require(r_max > 0, Errc::bad_config, "ray range must be positive");
  require(n_members >= 2, Errc::bad_config, "need at least 2 ensemble members");
  require(feature_width >= 8, Errc::bad_config, "feature width too small");
  require(ridge > 0, Errc::bad_config, "ridge must be positive");
  require(min_records >= 1, Errc::bad_config, "min_records must be positive");
  require(record_stride >= 1, Errc::bad_config, "record stride must be positive");
}

void Dataset::aggregate(const std::vector<DataRecord>& traj, int iteration) {
  for (const auto& r : traj) {
    require(std::isfinite(r.label_delta) && std::isfinite(r.label_v_target), Errc::missing_labels,
            "record without expert label");
  }
  records_.reserve(records_.size() + traj.size());
  for (auto r : traj) {
    r.iteration = iteration;
    records_.push_back(std::move(r));
  }
}

std::vector<const DataRecord*> Dataset::by_iteration(int iteration) const {
  std::vector<const DataRecord*> out;
  for (const auto& r : records_)
    if (r.iteration == iteration) out.push_back(&r);
  return out;
}

void Dataset::save_csv(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write dataset " + path);
  const int K = records_.empty() ? 0 : static_cast<int>(records_.front().obs.rays.size());
  out << "iter";
  for (int k = 0; k < K; ++k) out << ",ray_" << k;
  out << ",v,v_perp,omega,label_delta,label_v_target,x_lat,theta,c\n";
  char buf[64];
  for (const auto& r : records_) {
    out << r.iteration;
    for (int k = 0; k < K; ++k) {
      std::snprintf(buf, sizeof(buf), ",%.9g", r.obs.rays(k));
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.9g,%.9g,%.9g", r.obs.v, r.obs.v_perp, r.obs.omega);
    out << buf;
    std::snprintf(buf, sizeof(buf), ",%.9g,%.9g", r.label_delta, r.label_v_target);
    out << buf;
    std::snprintf(buf, sizeof(buf), ",%.9g,%.9g,%.9g\n", r.x_lat, r.theta, r.c);
    out << buf;
  }
}

Dataset Dataset::load_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_error, "cannot read dataset " + path);
  Dataset ds;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::io_error, "empty dataset file");
  int K = 0;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (tok.rfind("ray_", 0) == 0) ++K;
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    require(static_cast<int>(vals.size()) == K + 9, Errc::io_error, "bad dataset row");
    DataRecord r;
    r.iteration = static_cast<int>(vals[0]);
    r.obs.rays.resize(K);
    for (int k = 0; k < K; ++k) r.obs.rays(k) = vals[static_cast<std::size_t>(1 + k)];
    std::size_t i = static_cast<std::size_t>(1 + K);
    r.obs.v = vals[i++];
    r.obs.v_perp = vals[i++];
    r.obs.omega = vals[i++];
    r.label_delta = vals[i++];
    r.label_v_target = vals[i++];
    r.x_lat = vals[i++];
    r.theta = vals[i++];
    r.c = vals[i++];
    ds.records_.push_back(std::move(r));
  }
  return ds;
}

namespace {

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

// distance along the ray to segment [a, b]; infinity if missed
double ray_segment(const Eigen::Vector2d& o, const Eigen::Vector2d& d, const Eigen::Vector2d& a,
                   const Eigen::Vector2d& b) {
  const Eigen::Vector2d e = b - a;
  const double denom = cross2(d, e);
  if (std::abs(denom) < 1e-14) return std::numeric_limits<double>::infinity();
  const Eigen::Vector2d ao = a - o;
  const double t = cross2(ao, e) / denom;
  const double u = cross2(ao, d) / denom;
  if (t < 0.0 || u < -1e-9 || u > 1.0 + 1e-9) return std::numeric_limits<double>::infinity();
  return t;
}

}  // namespace

Observation observe(const GlobalPose& pose, double v, double v_perp, double omega,
                    const TrackDef& track, int rays, double r_max) {
  require(rays >= 2, Errc::precondition, "need at least 2 rays");
  const FrenetPose fr = to_frenet(pose, track);  // OffTrackTooFar guard

  const auto& B = track.ray_boundaries();
  const std::size_t nb = B.left.size();
  const std::size_t nseg = track.closed() ? nb : nb - 1;

  // only edge segments within reach of the fan matter
  const double window = r_max + 4.0 * track.max_half_width() + 2.0;
  const std::size_t center = static_cast<std::size_t>(track.wrap_s(fr.s) / B.spacing);
  const std::size_t half_span =
      std::min(nseg, static_cast<std::size_t>(window / B.spacing) + 2);

  Observation obs;
  obs.v = v;
  obs.v_perp = v_perp;
  obs.omega = omega;
  obs.rays.resize(rays);

  const Eigen::Vector2d origin{pose.x, pose.y};
  const double span = 200.0 * std::numbers::pi / 180.0;
  for (int k = 0; k < rays; ++k) {
    const double bearing = -0.5 * span + span * static_cast<double>(k) / (rays - 1);
    const double ang = pose.psi + bearing;
    const Eigen::Vector2d dir{std::cos(ang), std::sin(ang)};
    double best = r_max;
    const std::size_t lo = (2 * half_span >= nseg) ? 0 : (center + nb - half_span) % nb;
    const std::size_t count = (2 * half_span >= nseg) ? nseg : 2 * half_span;
    for (std::size_t q = 0; q < count; ++q) {
      const std::size_t i = (lo + q) % nb;
      if (!track.closed() && i + 1 >= nb) continue;
      const std::size_t j = (i + 1) % nb;
      best = std::min(best, ray_segment(origin, dir, B.left[i], B.left[j]));
      best = std::min(best, ray_segment(origin, dir, B.right[i], B.right[j]));
    }
    obs.rays(k) = std::clamp(best, 1e-6, r_max);
  }
  return obs;
}

Eigen::VectorXd observation_input(const Observation& obs, double r_max) {
  const int K = static_cast<int>(obs.rays.size());
  Eigen::VectorXd x(K + 3);
  x.head(K) = obs.rays / r_max;
  x(K) = obs.v / 10.0;
  x(K + 1) = obs.v_perp / 2.0;
  x(K + 2) = obs.omega / 2.0;
  return x;
}

namespace {

Eigen::VectorXd member_features(const Ensemble::Member& m, const Eigen::VectorXd& x) {
  const Eigen::VectorXd z = (m.W * x + m.phase).array().cos();
  Eigen::VectorXd out(z.size() + 1);
  out.head(z.size()) = z;
  out(z.size()) = 1.0;
  return out;
}

Ensemble::Member make_member(std::uint64_t seed, int in_dim, int width, double scale) {
  Ensemble::Member m;
  m.seed = seed;
  Rng rng(seed);
  m.W.resize(width, in_dim);
  for (int i = 0; i < width; ++i)
    for (int j = 0; j < in_dim; ++j) m.W(i, j) = scale * rng.normal();
  m.phase.resize(width);
  for (int i = 0; i < width; ++i) m.phase(i) = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return m;
}

}  // namespace

GaussianBelief Ensemble::predict(const Observation& obs) const {
  require(!members_.empty(), Errc::model_missing, "ensemble is not trained");
  const Eigen::VectorXd x = observation_input(obs, r_max_);
  Eigen::MatrixXd samples(static_cast<Eigen::Index>(members_.size()), out_dim_);
  for (std::size_t i = 0; i < members_.size(); ++i) {
    const Eigen::VectorXd z = member_features(members_[i], x);
    samples.row(static_cast<Eigen::Index>(i)) = (members_[i].readout.transpose() * z).transpose();
  }
  return GaussianBelief::from_samples(samples);
}

struct EnsembleTrainer {
  static Ensemble train(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                        const LearnerConfig& cfg, std::uint64_t seed, std::uint64_t model_tag,
                        std::vector<double>* mse_out) {
    const int mrows = static_cast<int>(X.rows());
    const int in_dim = static_cast<int>(X.cols());
    const int D = cfg.feature_width;

    Ensemble e;
    e.in_dim_ = in_dim;
    e.out_dim_ = static_cast<int>(Y.cols());
    e.r_max_ = cfg.r_max;
    e.members_.reserve(static_cast<std::size_t>(cfg.n_members));

    for (int mem = 0; mem < cfg.n_members; ++mem) {
      const std::uint64_t mseed = mix_seed(seed, model_tag * 1000 + static_cast<std::uint64_t>(mem));
      Ensemble::Member member =
          make_member(mseed, in_dim, D, cfg.feature_scale);

      std::vector<int> idx;
      if (cfg.bootstrap) {
        // quantile-mapped draws: the underlying uniform stream is fixed per
        // member, so growing the record set shifts the resample smoothly
        Rng rng(mix_seed(mseed, 0xb00f));
        const int draws = std::min(mrows, std::max(cfg.bootstrap_cap, 1));
        idx.resize(static_cast<std::size_t>(draws));
        for (auto& i : idx)
          i = std::min(mrows - 1, static_cast<int>(rng.uniform() * mrows));
      } else {
        idx.resize(static_cast<std::size_t>(mrows));
        for (int i = 0; i < mrows; ++i) idx[static_cast<std::size_t>(i)] = i;
      }

      const int mm = static_cast<int>(idx.size());
      Eigen::MatrixXd Z(mm, D + 1);
      Eigen::MatrixXd Yb(mm, e.out_dim_);
      for (int i = 0; i < mm; ++i) {
        Z.row(i) = member_features(member, X.row(idx[static_cast<std::size_t>(i)]).transpose())
                       .transpose();
        Yb.row(i) = Y.row(idx[static_cast<std::size_t>(i)]);
      }

      Eigen::MatrixXd G = Eigen::MatrixXd::Zero(D + 1, D + 1);
      G.selfadjointView<Eigen::Lower>().rankUpdate(Z.transpose(), 1.0 / mm);
      G = Eigen::MatrixXd(G.selfadjointView<Eigen::Lower>());
      G.diagonal().array() += cfg.ridge;
      const Eigen::MatrixXd rhs = Z.transpose() * Yb / mm;
      member.readout = G.ldlt().solve(rhs);

      if (mse_out) {
        const Eigen::MatrixXd err = Z * member.readout - Yb;
        mse_out->push_back(err.squaredNorm() / static_cast<double>(mm));
      }
      e.members_.push_back(std::move(member));
    }
    return e;
  }
};

Models fit(const Dataset& data, const LearnerConfig& cfg, std::uint64_t seed, FitReport* report) {
  cfg.validate();
  const int mrows = static_cast<int>(data.size());
  require(mrows >= cfg.min_records, Errc::too_few_records,
          "dataset has " + std::to_string(mrows) + " records, need " +
              std::to_string(cfg.min_records));

  const auto& recs = data.records();
  const int K = static_cast<int>(recs.front().obs.rays.size());
  Eigen::MatrixXd X(mrows, K + 3);
  Eigen::MatrixXd Ycom(mrows, 2);
  Eigen::MatrixXd Yst(mrows, 3);
  for (int i = 0; i < mrows; ++i) {
    const auto& r = recs[static_cast<std::size_t>(i)];
    X.row(i) = observation_input(r.obs, cfg.r_max).transpose();
    Ycom(i, 0) = r.label_delta;
    Ycom(i, 1) = r.label_v_target;
    Yst(i, 0) = r.x_lat;
    Yst(i, 1) = r.theta;
    Yst(i, 2) = r.c;
  }

  Models m;
  m.com = EnsembleTrainer::train(X, Ycom, cfg, seed, 1, report ? &report->control_mse : nullptr);
  m.st = EnsembleTrainer::train(X, Yst, cfg, seed, 2, report ? &report->state_mse : nullptr);
  return m;
}

GaussianBelief predict_control(const Ensemble& m, const Observation& obs) {
  require(m.out_dim() == 2, Errc::precondition, "not a control ensemble");
  return m.predict(obs);
}

GaussianBelief predict_state(const Ensemble& m, const Observation& obs) {
  require(m.out_dim() == 3, Errc::precondition, "not a state ensemble");
  return m.predict(obs);
}

void Ensemble::save(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write ensemble " + path);
  out << "racer_ensemble v1\n";
  out << members_.size() << " " << in_dim_ << " " << out_dim_ << " "
      << (members_.empty() ? 0 : members_.front().W.rows()) << " " << r_max_ << "\n";
  out.precision(17);
  for (const auto& m : members_) {
    out << m.seed << "\n";
    for (Eigen::Index i = 0; i < m.W.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.W.cols(); ++j) out << m.W(i, j) << " ";
      out << m.phase(i) << "\n";
    }
    for (Eigen::Index i = 0; i < m.readout.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.readout.cols(); ++j) out << m.readout(i, j) << " ";
      out << "\n";
    }
  }
}

Ensemble Ensemble::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_error, "cannot read ensemble " + path);
  std::string magic, version;
  in >> magic >> version;
  require(magic == "racer_ensemble" && version == "v1", Errc::io_error, "bad ensemble header");
  std::size_t count;
  int in_dim, out_dim;
  Eigen::Index width;
  double r_max;
  in >> count >> in_dim >> out_dim >> width >> r_max;
  Ensemble e;
  e.in_dim_ = in_dim;
  e.out_dim_ = out_dim;
  e.r_max_ = r_max;
  e.members_.resize(count);
  for (auto& m : e.members_) {
    in >> m.seed;
    m.W.resize(width, in_dim);
    m.phase.resize(width);
    for (Eigen::Index i = 0; i < width; ++i) {
      for (int j = 0; j < in_dim; ++j) in >> m.W(i, j);
      in >> m.phase(i);
    }
    m.readout.resize(width + 1, out_dim);
    for (Eigen::Index i = 0; i <= width; ++i)
      for (int j = 0; j < out_dim; ++j) in >> m.readout(i, j);
  }
  require(in.good() || in.eof(), Errc::io_error, "truncated ensemble file");
  return e;
}

}  // namespace racer
