#pragma once

#include <stdexcept>
#include <string>

namespace racer {

enum class Errc {
  duplicate_points,
  too_few_points,
  off_track_too_far,
  fold_over,
  below_speed_floor,
  infeasible,
  max_iter,
  qp_failure,
  too_few_records,
  missing_labels,
  model_missing,
  precondition,
  bad_config,
  io_error,
};

inline const char* to_string(Errc c) {
  switch (c) {
    case Errc::duplicate_points: return "duplicate_points";
    case Errc::too_few_points: return "too_few_points";
    case Errc::off_track_too_far: return "off_track_too_far";
    case Errc::fold_over: return "fold_over";
    case Errc::below_speed_floor: return "below_speed_floor";
    case Errc::infeasible: return "infeasible";
    case Errc::max_iter: return "max_iter";
    case Errc::qp_failure: return "qp_failure";
    case Errc::too_few_records: return "too_few_records";
    case Errc::missing_labels: return "missing_labels";
    case Errc::model_missing: return "model_missing";
    case Errc::precondition: return "precondition";
    case Errc::bad_config: return "bad_config";
    case Errc::io_error: return "io_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, Errc code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

}  // namespace racer
