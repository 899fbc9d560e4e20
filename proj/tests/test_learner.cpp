#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "racer/harness.hpp"
#include "racer/learner.hpp"
#include "racer/rng.hpp"

using namespace racer;

namespace {

struct Fixture {
  TrackDef track = default_track();
  LearnerConfig cfg;

  Fixture() {
    cfg.feature_width = 96;  // keep the tests quick
    cfg.n_members = 6;
  }
};

Observation observe_frenet(const Fixture& fx, double s, double x_lat, double theta, double v) {
  const GlobalPose pose = from_frenet(FrenetPose{s, x_lat, theta, 0.0}, fx.track);
  return observe(pose, v, 0.0, 0.0, fx.track, fx.cfg.rays, fx.cfg.r_max);
}

// records sampled around the track with ground-truth labels that the fan
// determines geometrically
std::vector<DataRecord> synthetic_records(const Fixture& fx, int count, Rng& rng,
                                          double x_lat_lo, double x_lat_hi) {
  std::vector<DataRecord> out;
  while (static_cast<int>(out.size()) < count) {
    const double s = rng.uniform(0.0, fx.track.total_length());
    const double x_lat = rng.uniform(x_lat_lo, x_lat_hi);
    const double theta = rng.uniform(-0.25, 0.25);
    const double v = rng.uniform(5.0, 10.0);
    DataRecord r;
    r.obs = observe_frenet(fx, s, x_lat, theta, v);
    r.obs.v = v;
    r.x_lat = x_lat;
    r.theta = theta;
    r.c = fx.track.curvature_at(s);
    r.label_delta = 0.3 * x_lat - 0.8 * theta;  // smooth function of the state
    r.label_v_target = v + 0.5;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

TEST_CASE("mid-lane fan on a straight is symmetric") {
  Fixture fx;
  // the default circuit opens with a straight; sample mid-straight
  const Observation obs = observe_frenet(fx, 3.0, 0.0, 0.0, 8.0);
  const int K = fx.cfg.rays;
  for (int k = 0; k < K / 2; ++k) {
    CHECK(obs.rays(k) == doctest::Approx(obs.rays(K - 1 - k)).epsilon(1e-6));
  }
}

TEST_CASE("ray toward a touched boundary reads zero") {
  Fixture fx;
  const Observation obs = observe_frenet(fx, 3.0, 1.999, 0.0, 8.0);
  // bearing +100 degrees looks almost straight left at the wall
  CHECK(obs.rays(fx.cfg.rays - 1) < 0.02);
}

TEST_CASE("rays match the dense point-in-polygon oracle") {
  Fixture fx;
  Rng rng(404);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double s = rng.uniform(0.0, fx.track.total_length());
    const double x_lat = rng.uniform(-1.8, 1.8);
    const double theta = rng.uniform(-0.5, 0.5);
    const GlobalPose pose = from_frenet(FrenetPose{s, x_lat, theta, 0.0}, fx.track);
    const Observation obs = observe(pose, 5.0, 0.0, 0.0, fx.track, fx.cfg.rays, fx.cfg.r_max);
    const double span = 200.0 * std::numbers::pi / 180.0;
    for (int k = 0; k < fx.cfg.rays; ++k) {
      const double bearing = -0.5 * span + span * k / (fx.cfg.rays - 1);
      const double expect = oracles::ray_march_oracle(Eigen::Vector2d{pose.x, pose.y},
                                                      pose.psi + bearing, fx.cfg.r_max, fx.track);
      worst = std::max(worst, std::abs(obs.rays(k) - expect));
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("poses far outside the lane cannot be observed") {
  Fixture fx;
  const GlobalPose pose{1000.0, 1000.0, 0.0};
  CHECK_THROWS_AS(observe(pose, 5.0, 0.0, 0.0, fx.track, fx.cfg.rays, fx.cfg.r_max), Error);
}

TEST_CASE("fit learns a smooth synthetic map") {
  Fixture fx;
  Rng rng(7);
  Dataset data;
  data.aggregate(synthetic_records(fx, 600, rng, -1.5, 1.5), 0);
  const Models m = fit(data, fx.cfg, 99);

  double err_delta = 0.0, err_xlat = 0.0;
  const auto probes = synthetic_records(fx, 150, rng, -1.5, 1.5);
  for (const auto& r : probes) {
    const GaussianBelief com = predict_control(m.com, r.obs);
    const GaussianBelief st = predict_state(m.st, r.obs);
    err_delta += std::abs(com.mean(0) - r.label_delta);
    err_xlat += std::abs(st.mean(0) - r.x_lat);
  }
  err_delta /= probes.size();
  err_xlat /= probes.size();
  CHECK(err_delta < 0.05);
  CHECK(err_xlat < 0.1);
}

TEST_CASE("too few records is an error") {
  Fixture fx;
  Dataset data;
  try {
    fit(data, fx.cfg, 1);
    FAIL("expected too_few_records");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::too_few_records);
  }
}

TEST_CASE("duplicated dataset trains identical weights without bootstrap") {
  Fixture fx;
  fx.cfg.bootstrap = false;
  Rng rng(21);
  const auto recs = synthetic_records(fx, 120, rng, -1.5, 1.5);
  Dataset once, twice;
  once.aggregate(recs, 0);
  twice.aggregate(recs, 0);
  twice.aggregate(recs, 1);
  const Models a = fit(once, fx.cfg, 5);
  const Models b = fit(twice, fx.cfg, 5);
  for (int i = 0; i < a.com.members(); ++i) {
    const auto& wa = a.com.member_list()[static_cast<std::size_t>(i)].readout;
    const auto& wb = b.com.member_list()[static_cast<std::size_t>(i)].readout;
    CHECK((wa - wb).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("fixed seeds give bit-identical ensembles and beliefs") {
  Fixture fx;
  Rng rng(33);
  Dataset data;
  data.aggregate(synthetic_records(fx, 200, rng, -1.5, 1.5), 0);
  const Models a = fit(data, fx.cfg, 1234);
  const Models b = fit(data, fx.cfg, 1234);
  const Observation probe = observe_frenet(fx, 12.0, 0.3, 0.05, 7.0);
  const GaussianBelief ba = predict_control(a.com, probe);
  const GaussianBelief bb = predict_control(b.com, probe);
  CHECK(ba.mean == bb.mean);
  CHECK(ba.stddev == bb.stddev);
  for (int i = 0; i < a.com.members(); ++i) {
    CHECK(a.com.member_list()[static_cast<std::size_t>(i)].readout ==
          b.com.member_list()[static_cast<std::size_t>(i)].readout);
  }
}

TEST_CASE("belief mean is the arithmetic member mean") {
  Fixture fx;
  Rng rng(55);
  Dataset data;
  data.aggregate(synthetic_records(fx, 150, rng, -1.5, 1.5), 0);
  const Models m = fit(data, fx.cfg, 777);
  const Observation probe = observe_frenet(fx, 40.0, -0.4, -0.1, 6.0);
  const GaussianBelief b = predict_control(m.com, probe);
  const Eigen::VectorXd mean = b.samples.colwise().mean();
  CHECK((b.mean - mean).cwiseAbs().maxCoeff() < 1e-15);
  // population standard deviation, exactly
  Eigen::MatrixXd centered = b.samples.rowwise() - mean.transpose();
  const Eigen::VectorXd sd =
      (centered.array().square().colwise().sum() / b.samples.rows()).sqrt().matrix();
  CHECK((b.stddev - sd).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("out-of-distribution probes carry more spread") {
  Fixture fx;
  Rng rng(101);
  Dataset data;
  // train only on the right half of the lane
  data.aggregate(synthetic_records(fx, 500, rng, -1.6, -0.2), 0);
  const Models m = fit(data, fx.cfg, 2468);

  std::vector<double> in_spread;
  for (int i = 0; i < 60; ++i) {
    const double s = rng.uniform(0.0, fx.track.total_length());
    const Observation probe = observe_frenet(fx, s, rng.uniform(-1.5, -0.3), rng.uniform(-0.2, 0.2),
                                             rng.uniform(5.0, 10.0));
    in_spread.push_back(predict_control(m.com, probe).stddev.sum());
  }
  std::sort(in_spread.begin(), in_spread.end());
  const double median = in_spread[in_spread.size() / 2];

  int above = 0;
  const int probes = 60;
  for (int i = 0; i < probes; ++i) {
    const double s = rng.uniform(0.0, fx.track.total_length());
    // opposite side of the lane, never visited in training
    const Observation probe = observe_frenet(fx, s, rng.uniform(1.0, 1.8), rng.uniform(-0.4, 0.4),
                                             rng.uniform(5.0, 10.0));
    if (predict_control(m.com, probe).stddev.sum() > median) ++above;
  }
  CHECK(above >= probes * 8 / 10);
}

TEST_CASE("aggregation appends, tags and validates") {
  Fixture fx;
  Rng rng(11);
  Dataset data;
  const auto first = synthetic_records(fx, 60, rng, -1.5, 1.5);
  const auto second = synthetic_records(fx, 40, rng, -1.5, 1.5);
  data.aggregate(first, 0);
  CHECK(data.size() == 60);
  data.aggregate(second, 1);
  CHECK(data.size() == 100);
  CHECK(data.by_iteration(0).size() == 60);
  CHECK(data.by_iteration(1).size() == 40);
  // prior records untouched
  CHECK(data.records()[5].label_delta == doctest::Approx(first[5].label_delta));

  auto bad = synthetic_records(fx, 2, rng, -1.0, 1.0);
  bad[1].label_delta = std::numeric_limits<double>::quiet_NaN();
  try {
    data.aggregate(bad, 2);
    FAIL("expected missing_labels");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::missing_labels);
  }
  CHECK(data.size() == 100);
}

TEST_CASE("dataset csv round trip") {
  Fixture fx;
  Rng rng(62);
  Dataset data;
  data.aggregate(synthetic_records(fx, 25, rng, -1.0, 1.0), 0);
  data.aggregate(synthetic_records(fx, 25, rng, -1.0, 1.0), 3);
  const std::string path = "test_dataset_io.csv";
  data.save_csv(path);
  const Dataset back = Dataset::load_csv(path);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back.records()[i].iteration == data.records()[i].iteration);
    CHECK(back.records()[i].label_delta ==
          doctest::Approx(data.records()[i].label_delta).epsilon(1e-9));
    CHECK((back.records()[i].obs.rays - data.records()[i].obs.rays).cwiseAbs().maxCoeff() < 1e-7);
  }
  std::remove(path.c_str());
}

TEST_CASE("ensemble save and load reproduce predictions exactly") {
  Fixture fx;
  Rng rng(75);
  Dataset data;
  data.aggregate(synthetic_records(fx, 150, rng, -1.5, 1.5), 0);
  const Models m = fit(data, fx.cfg, 31415);
  const std::string path = "test_ensemble_io.txt";
  m.st.save(path);
  const Ensemble back = Ensemble::load(path);
  const Observation probe = observe_frenet(fx, 77.0, 0.2, 0.1, 9.0);
  const GaussianBelief a = predict_state(m.st, probe);
  const GaussianBelief b = predict_state(back, probe);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.samples - b.samples).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}
