#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "racer/cbf.hpp"
#include "racer/track.hpp"

namespace racer {

struct LearnerConfig {
  int rays = 15;             // fan size K
  double r_max = 15.0;       // range cap, m
  int n_members = 16;        // ensemble size (= rollout count for the filter)
  int feature_width = 256;   // random features per member
  double ridge = 1e-3;       // relative ridge regularization
  double feature_scale = 1.0;
  bool bootstrap = true;
  int bootstrap_cap = 3000;  // rows drawn per member
  int min_records = 50;
  int record_stride = 3;     // keep every n-th control step; 50 Hz frames are
                             // heavily correlated

  void validate() const;
};

struct Observation {
  Eigen::VectorXd rays;  // distances to the lane edges over a fixed bearing fan
  double v = 0.0;
  double v_perp = 0.0;
  double omega = 0.0;
};

struct DataRecord {
  Observation obs;
  double label_delta = 0.0;
  double label_v_target = 0.0;
  double x_lat = 0.0;  // ground-truth partial state
  double theta = 0.0;
  double c = 0.0;
  int iteration = 0;
};

// Append-only record store across aggregation rounds.
class Dataset {
 public:
  std::size_t size() const { return records_.size(); }
  const std::vector<DataRecord>& records() const { return records_; }

  // appends labeled records tagged with the round index
  void aggregate(const std::vector<DataRecord>& traj, int iteration);
  std::vector<const DataRecord*> by_iteration(int iteration) const;

  void save_csv(const std::string& path) const;
  static Dataset load_csv(const std::string& path);

 private:
  std::vector<DataRecord> records_;
};

// Bearing fan of exact ray/segment intersections against the lane edge
// polylines, plus the measured body rates.
Observation observe(const GlobalPose& pose, double v, double v_perp, double omega,
                    const TrackDef& track, int rays, double r_max);

// Ensemble of random-feature ridge regressors; members differ by feature
// projection seed and bootstrap resample only.
class Ensemble {
 public:
  struct Member {
    std::uint64_t seed = 0;
    Eigen::MatrixXd W;        // feature projection
    Eigen::VectorXd phase;
    Eigen::MatrixXd readout;  // (width + 1) x out_dim, last row is the bias
  };

  int out_dim() const { return out_dim_; }
  int in_dim() const { return in_dim_; }
  int members() const { return static_cast<int>(members_.size()); }
  const std::vector<Member>& member_list() const { return members_; }

  GaussianBelief predict(const Observation& obs) const;

  void save(const std::string& path) const;
  static Ensemble load(const std::string& path);

 private:
  friend struct EnsembleTrainer;
  int in_dim_ = 0;
  int out_dim_ = 0;
  double r_max_ = 15.0;
  std::vector<Member> members_;
};

struct FitReport {
  std::vector<double> control_mse;
  std::vector<double> state_mse;
};

struct Models {
  Ensemble com;  // observation -> (delta, v_target)
  Ensemble st;   // observation -> (x_lat, theta, c)
};

Models fit(const Dataset& data, const LearnerConfig& cfg, std::uint64_t seed,
           FitReport* report = nullptr);

GaussianBelief predict_control(const Ensemble& m, const Observation& obs);
GaussianBelief predict_state(const Ensemble& m, const Observation& obs);

// normalized regression input for an observation
Eigen::VectorXd observation_input(const Observation& obs, double r_max);

}  // namespace racer
