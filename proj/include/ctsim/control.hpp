#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ctsim/kernel.hpp"
#include "ctsim/metrics.hpp"
#include "ctsim/radio.hpp"
#include "ctsim/slp.hpp"

namespace ctsim {

struct PidGains {
  double kp = 2.0;
  double ki = 0.8;
  double kd = 0.1;
};

/// Discrete PID speed controller with output clamping and integral
/// anti-windup (|ki * integral| <= u_max).
class PidController {
 public:
  PidController() = default;
  PidController(PidGains gains, std::uint64_t pp_us, double u_min, double u_max);

  /// One loop iteration. Throws Error(kInvalidArgument) if dt_s <= 0.
  double step(double measured, double dt_s);

  void set_setpoint(double sp) { setpoint_ = sp; }
  double setpoint() const { return setpoint_; }
  double integral() const { return integral_accum_; }
  double prev_error() const { return prev_error_; }
  double u_min() const { return u_min_; }
  double u_max() const { return u_max_; }
  std::uint64_t pp_us() const { return pp_us_; }
  const PidGains& gains() const { return gains_; }
  void reset();

 private:
  PidGains gains_;
  std::uint64_t pp_us_ = 600'000;
  double setpoint_ = 0.0;
  double integral_accum_ = 0.0;
  double prev_error_ = 0.0;
  double u_min_ = 0.0;
  double u_max_ = 100.0;
};

double pid_step(PidController& ctrl, double measured, double dt_s);

struct PlantParams {
  double tau_s = 0.4;
  double sigma_v = 0.3;     // cm/s per sqrt(s)
  double v_max = 40.0;      // cm/s
  double gain_v = 0.8;      // cm/s per actuation unit
  double wheel_base_cm = 12.0;
  /// Encoder resolution; 0 reads the odometer exactly.
  double encoder_tick_cm = 2.0;
};

struct Pose {
  double x_cm = 0.0;
  double y_cm = 0.0;
  double heading_rad = 0.0;
};

/// Two-wheel differential-drive robot with first-order motor lag.
struct RobotState {
  std::array<double, 2> wheel_speed{};  // left, right, cm/s
  std::array<double, 2> odometer_cm{};
  Pose pose;
  PlantParams params;

  double speed() const { return 0.5 * (wheel_speed[0] + wheel_speed[1]); }
};

/// Advances both wheels by dt under constant actuation `u`. Noise is drawn
/// from `noise` when non-null. Returns the new mean wheel speed.
double motor_step(RobotState& robot, double u, double dt_s, RngStream* noise);

/// Differential-drive pose update for given wheel travel distances.
void integrate_pose(Pose& pose, double left_cm, double right_cm, double wheel_base_cm);

/// Piecewise-constant speed schedule: (time_s, speed_cm_s) steps; 0 before
/// the first step.
class TargetSchedule {
 public:
  TargetSchedule() = default;
  explicit TargetSchedule(std::vector<std::pair<double, double>> steps);

  double value_at(double t_s) const;
  const std::vector<std::pair<double, double>>& steps() const { return steps_; }
  bool empty() const { return steps_.empty(); }

 private:
  std::vector<std::pair<double, double>> steps_;
};

enum class MrcRole { kLeader, kFollower, kCentralController, kCommandedDevice };

const char* to_string(MrcRole role);

/// Flood application payload: tag byte 0x01 + IEEE-754 double (LE).
std::vector<std::uint8_t> encode_speed(double cm_s);
std::optional<double> decode_speed(std::span<const std::uint8_t> payload);

struct PidSample {
  VirtualTime at{};
  double setpoint = 0.0;
  double measured = 0.0;
  double u = 0.0;
};

struct RoundValue {
  std::uint32_t round_seq = 0;
  VirtualTime at{};
  double value = 0.0;
};

struct CcuConfig {
  MrcRole role = MrcRole::kFollower;
  std::uint64_t pp_us = 600'000;
  PidGains gains;
  double u_min = 0.0;
  double u_max = 100.0;
  PlantParams plant;
  Position anchor;  // radio position at t = 0
  double heading_rad = 0.0;
  std::uint64_t physics_step_us = 10'000;
};

/// Computation & control unit: MRC application, PID loop and (for mobile
/// roles) the robot it drives.
class Ccu final : public CcuEndpoint {
 public:
  Ccu(Kernel& kernel, std::uint32_t node, NodeClock clock, CcuConfig config,
      TargetSchedule schedule, TargetSchedule ground_truth, RngStreams& rng);

  /// Starts the PID timer (mobile roles only).
  void start();

  // CcuEndpoint
  void on_hi(std::uint32_t round_seq, std::int64_t ccu_local_us) override;
  void on_data(std::uint32_t round_seq, std::span<const std::uint8_t> payload) override;
  void on_log_sync(std::uint32_t round_seq) override;
  std::vector<std::uint8_t> on_handover(std::uint32_t round_seq) override;

  bool mobile() const { return robot_.has_value(); }
  /// Radio position at `t`, extrapolated without advancing the plant.
  Position position_at(VirtualTime t) const;

  std::uint32_t node() const { return node_; }
  MrcRole role() const { return config_.role; }
  const NodeClock& clock() const { return clock_; }
  const PidController& pid() const { return pid_; }
  const RobotState* robot() const { return robot_ ? &*robot_ : nullptr; }
  double latest_measured() const { return latest_measured_; }

  const std::vector<MetricsRecord>& records() const { return records_; }
  const std::vector<HiStamp>& hi_stamps() const { return hi_stamps_; }
  const std::vector<PidSample>& pid_trace() const { return pid_trace_; }
  const std::vector<RoundValue>& rx_trace() const { return rx_trace_; }
  const std::vector<RoundValue>& handover_trace() const { return handover_trace_; }

  /// Leader: advance the PID loop toward the leader's own schedule.
  void leader_step();
  /// Follower / commanded device: adopt the last received speed, then step.
  void follower_step();
  /// Central controller: the command staged for flooding.
  double central_controller_step() const;

 private:
  void schedule_tick(bool deferred);
  void on_tick(bool deferred);
  void pid_iteration(double setpoint);
  void advance_to(VirtualTime t);
  double read_encoder(VirtualTime t);
  double mission_time_s() const;

  Kernel& kernel_;
  std::uint32_t node_;
  NodeClock clock_;
  CcuConfig config_;
  TargetSchedule schedule_;
  TargetSchedule ground_truth_;
  RngStream* noise_ = nullptr;

  PidController pid_;
  std::optional<RobotState> robot_;
  VirtualTime plant_time_{};
  double u_ = 0.0;
  std::int64_t local_at_start_ = 0;
  std::int64_t next_tick_local_ = 0;

  std::array<double, 2> last_read_odometer_{};
  std::int64_t last_read_local_ = 0;
  double latest_measured_ = 0.0;
  std::optional<double> last_rx_speed_;

  std::vector<MetricsRecord> records_;
  std::vector<HiStamp> hi_stamps_;
  std::vector<PidSample> pid_trace_;
  std::vector<RoundValue> rx_trace_;
  std::vector<RoundValue> handover_trace_;
};

}  // namespace ctsim
