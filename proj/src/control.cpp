#include "ctsim/control.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "ctsim/error.hpp"
#include "ctsim/metrics.hpp"

namespace ctsim {

PidController::PidController(PidGains gains, std::uint64_t pp_us, double u_min,
                             double u_max)
    : gains_(gains), pp_us_(pp_us), u_min_(u_min), u_max_(u_max) {
  if (pp_us_ == 0) throw Error(Errc::kInvalidArgument, "PID period must be positive");
  if (!(u_min_ < u_max_)) throw Error(Errc::kInvalidArgument, "u_min must be < u_max");
}

void PidController::reset() {
  integral_accum_ = 0.0;
  prev_error_ = 0.0;
}

double PidController::step(double measured, double dt_s) {
  if (!(dt_s > 0.0)) throw Error(Errc::kInvalidArgument, "pid_step requires dt > 0");
  const double e = setpoint_ - measured;
  integral_accum_ += e * dt_s;
  if (gains_.ki != 0.0) {
    const double limit = u_max_ / std::abs(gains_.ki);
    integral_accum_ = std::clamp(integral_accum_, -limit, limit);
  }
  const double derivative = (e - prev_error_) / dt_s;
  prev_error_ = e;
  const double u = gains_.kp * e + gains_.ki * integral_accum_ + gains_.kd * derivative;
  return std::clamp(u, u_min_, u_max_);
}

double pid_step(PidController& ctrl, double measured, double dt_s) {
  return ctrl.step(measured, dt_s);
}

void integrate_pose(Pose& pose, double left_cm, double right_cm, double wheel_base_cm) {
  const double ds = 0.5 * (left_cm + right_cm);
  const double dtheta = (right_cm - left_cm) / wheel_base_cm;
  if (std::abs(dtheta) < 1e-12) {
    pose.x_cm += ds * std::cos(pose.heading_rad);
    pose.y_cm += ds * std::sin(pose.heading_rad);
    return;
  }
  const double radius = ds / dtheta;
  const double th1 = pose.heading_rad + dtheta;
  pose.x_cm += radius * (std::sin(th1) - std::sin(pose.heading_rad));
  pose.y_cm -= radius * (std::cos(th1) - std::cos(pose.heading_rad));
  pose.heading_rad = th1;
}

double motor_step(RobotState& robot, double u, double dt_s, RngStream* noise) {
  if (!(dt_s > 0.0)) throw Error(Errc::kInvalidArgument, "motor_step requires dt > 0");
  const auto& p = robot.params;
  const double v_ss = std::clamp(p.gain_v * u, 0.0, p.v_max);
  // Exact first-order response over dt for constant u.
  const double f = 1.0 - std::exp(-dt_s / p.tau_s);
  std::array<double, 2> travel{};
  for (std::size_t w = 0; w < 2; ++w) {
    const double v0 = robot.wheel_speed[w];
    travel[w] = v_ss * dt_s + (v0 - v_ss) * p.tau_s * f;
    double v = v0 + (v_ss - v0) * f;
    if (noise != nullptr && p.sigma_v > 0.0) v += noise->normal(0.0, p.sigma_v * std::sqrt(dt_s));
    robot.wheel_speed[w] = std::clamp(v, 0.0, p.v_max);
    robot.odometer_cm[w] += travel[w];
  }
  integrate_pose(robot.pose, travel[0], travel[1], p.wheel_base_cm);
  return robot.speed();
}

TargetSchedule::TargetSchedule(std::vector<std::pair<double, double>> steps)
    : steps_(std::move(steps)) {
  if (!std::is_sorted(steps_.begin(), steps_.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; })) {
    throw Error(Errc::kInvalidArgument, "schedule steps must be in time order");
  }
}

double TargetSchedule::value_at(double t_s) const {
  double v = 0.0;
  for (const auto& [t, speed] : steps_) {
    if (t > t_s) break;
    v = speed;
  }
  return v;
}

const char* to_string(MrcRole role) {
  switch (role) {
    case MrcRole::kLeader: return "leader";
    case MrcRole::kFollower: return "follower";
    case MrcRole::kCentralController: return "controller";
    case MrcRole::kCommandedDevice: return "device";
  }
  return "?";
}

std::vector<std::uint8_t> encode_speed(double cm_s) {
  const auto bits = std::bit_cast<std::uint64_t>(cm_s);
  std::vector<std::uint8_t> out{0x01};
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  return out;
}

std::optional<double> decode_speed(std::span<const std::uint8_t> payload) {
  if (payload.size() != 9 || payload[0] != 0x01) return std::nullopt;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(payload[1 + i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

Ccu::Ccu(Kernel& kernel, std::uint32_t node, NodeClock clock, CcuConfig config,
         TargetSchedule schedule, TargetSchedule ground_truth, RngStreams& rng)
    : kernel_(kernel),
      node_(node),
      clock_(clock),
      config_(config),
      schedule_(std::move(schedule)),
      ground_truth_(std::move(ground_truth)),
      pid_(config.gains, config.pp_us, config.u_min, config.u_max) {
  if (config_.role != MrcRole::kCentralController) {
    RobotState r;
    r.params = config_.plant;
    r.pose.heading_rad = config_.heading_rad;
    robot_ = r;
    noise_ = &rng.stream("plant-noise", node_);
  }
  plant_time_ = kernel_.now();
  local_at_start_ = clock_.local_time(kernel_.now());
  last_read_local_ = local_at_start_;
}

void Ccu::start() {
  if (!mobile()) return;
  const auto pp = static_cast<std::int64_t>(config_.pp_us);
  const std::int64_t local_now = clock_.local_time(kernel_.now());
  // First tick on the next local multiple of the period.
  std::int64_t q = local_now / pp;
  if (q * pp < local_now) ++q;
  next_tick_local_ = q * pp;
  schedule_tick(false);
}

void Ccu::schedule_tick(bool deferred) {
  const VirtualTime at =
      deferred ? kernel_.now() : std::max(kernel_.now(), clock_.global_time(next_tick_local_));
  kernel_.schedule_at(at, EventKind::kPidTick, node_,
                      [this, deferred](const Event&) { on_tick(deferred); });
}

void Ccu::on_tick(bool deferred) {
  // Serial phases that coincide with a PID tick run first; re-queueing once
  // at the same instant puts this tick behind them.
  if (!deferred && kernel_.pending_at_now()) {
    schedule_tick(true);
    return;
  }
  if (config_.role == MrcRole::kLeader) {
    leader_step();
  } else {
    follower_step();
  }
  next_tick_local_ += static_cast<std::int64_t>(config_.pp_us);
  schedule_tick(false);
}

double Ccu::mission_time_s() const {
  return static_cast<double>(clock_.local_time(kernel_.now()) - local_at_start_) * 1e-6;
}

void Ccu::advance_to(VirtualTime t) {
  if (!robot_) return;
  while (plant_time_ < t) {
    const std::uint64_t step = std::min<std::uint64_t>(config_.physics_step_us, t.ticks - plant_time_.ticks);
    motor_step(*robot_, u_, static_cast<double>(step) * 1e-6, noise_);
    plant_time_ = plant_time_ + step;
  }
}

double Ccu::read_encoder(VirtualTime t) {
  advance_to(t);
  const std::int64_t local = clock_.local_time(t);
  const double dt = static_cast<double>(local - last_read_local_) * 1e-6;
  if (!(dt > 0.0)) return latest_measured_;
  const double tick = robot_->params.encoder_tick_cm;
  auto quantize = [tick](double x) { return tick > 0.0 ? std::floor(x / tick) * tick : x; };
  double travelled = 0.0;
  for (std::size_t w = 0; w < 2; ++w) {
    travelled += quantize(robot_->odometer_cm[w]) - quantize(last_read_odometer_[w]);
  }
  last_read_odometer_ = robot_->odometer_cm;
  last_read_local_ = local;
  return 0.5 * travelled / dt;
}

void Ccu::pid_iteration(double setpoint) {
  const double measured = read_encoder(kernel_.now());
  pid_.set_setpoint(setpoint);
  u_ = pid_step(pid_, measured, static_cast<double>(config_.pp_us) * 1e-6);
  latest_measured_ = measured;
  pid_trace_.push_back({kernel_.now(), setpoint, measured, u_});
}

void Ccu::leader_step() { pid_iteration(schedule_.value_at(mission_time_s())); }

void Ccu::follower_step() { pid_iteration(last_rx_speed_.value_or(0.0)); }

double Ccu::central_controller_step() const { return schedule_.value_at(mission_time_s()); }

Position Ccu::position_at(VirtualTime t) const {
  if (!robot_) return config_.anchor;
  const double ahead_s =
      t > plant_time_ ? static_cast<double>(t.ticks - plant_time_.ticks) * 1e-6 : 0.0;
  const double extra_cm = robot_->speed() * ahead_s;
  const auto& pose = robot_->pose;
  return {config_.anchor.x_m + (pose.x_cm + extra_cm * std::cos(pose.heading_rad)) / 100.0,
          config_.anchor.y_m + (pose.y_cm + extra_cm * std::sin(pose.heading_rad)) / 100.0};
}

void Ccu::on_hi(std::uint32_t round_seq, std::int64_t ccu_local_us) {
  hi_stamps_.push_back({round_seq, ccu_local_us});
}

void Ccu::on_data(std::uint32_t round_seq, std::span<const std::uint8_t> payload) {
  if (config_.role == MrcRole::kLeader || config_.role == MrcRole::kCentralController) return;
  if (auto v = decode_speed(payload)) {
    last_rx_speed_ = *v;
    rx_trace_.push_back({round_seq, kernel_.now(), *v});
  }
}

void Ccu::on_log_sync(std::uint32_t round_seq) {
  MetricsRecord r;
  r.node_id = node_;
  r.global_time_us = kernel_.now().ticks;
  r.local_time_us = clock_.local_time(kernel_.now());
  r.target_speed = ground_truth_.value_at(kernel_.now().seconds());
  r.measured_speed = mobile() ? latest_measured_ : std::nan("");
  r.last_rx_payload_speed = last_rx_speed_.value_or(std::nan(""));
  r.round_seq = round_seq;
  records_.push_back(r);
}

std::vector<std::uint8_t> Ccu::on_handover(std::uint32_t round_seq) {
  const double value = config_.role == MrcRole::kCentralController ? central_controller_step()
                                                                    : latest_measured_;
  handover_trace_.push_back({round_seq, kernel_.now(), value});
  return encode_speed(value);
}

}  // namespace ctsim
