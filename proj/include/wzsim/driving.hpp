#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "wzsim/random.hpp"
#include "wzsim/types.hpp"

namespace wzsim {

/// Longitudinal situation of one vehicle for one step. netGap is the
/// bumper-to-bumper distance to the leader and must be >= 0 when a leader
/// is present.
struct FollowContext {
    double egoSpeed = 0.0;                  // m/s
    std::optional<double> leaderSpeed;      // m/s
    std::optional<double> netGap;           // m
    double localSpeedLimit = kmh_to_ms(80); // m/s
    double dt = 0.1;                        // s
};

struct AccSettings {
    double desiredTimeGap = 1.0;    // s
    double minGap = 2.0;            // m
    double speedGain = 0.4;         // 1/s
    double gapGain = 0.23;          // 1/s^2
    double speedDiffGain = 0.07;    // 1/s
    double detectionRange = 120.0;  // m
};

// Safe following speed: the fastest speed from which the follower,
// reacting after tau and braking at b, still stops behind a leader that
// brakes at b from leaderSpeed across netGap.
//
//   v_safe = -b*tau + sqrt((b*tau)^2 + v_leader^2 + 2*b*gap)
inline double krauss_safe_speed(double leaderSpeed, double netGap, double decel, double tau) {
    const double bt = decel * tau;
    const double arg = bt * bt + leaderSpeed * leaderSpeed + 2.0 * decel * std::max(0.0, netGap);
    return -bt + std::sqrt(arg);
}

/// One Krauss speed update for a manually driven vehicle. The returned
/// speed respects the local limit, the acceleration bound, and (with a
/// leader) the safe-speed barrier; dawdling then removes up to
/// sigma*accel*dt. Consumes exactly one uniform draw.
inline double krauss_speed_update(const FollowContext& ctx, const DriverParams& p, Rng& rng) {
    double desired = std::min(ctx.localSpeedLimit, ctx.egoSpeed + p.accel * ctx.dt);
    if (ctx.leaderSpeed && ctx.netGap) {
        desired = std::min(desired, krauss_safe_speed(*ctx.leaderSpeed, *ctx.netGap, p.decel, p.tau));
    }
    const double eta = rng.uniform01();
    return std::max(0.0, desired - p.sigma * p.accel * ctx.dt * eta);
}

/// ACC acceleration command. Speed-control mode tracks the local limit
/// when no leader is detected within range; gap-control mode regulates
/// toward minGap + desiredTimeGap*egoSpeed. The command is clamped to the
/// vehicle's [-decelLimit, accelLimit].
inline double acc_acceleration(const FollowContext& ctx, const AccSettings& s,
                               double accelLimit, double decelLimit) {
    double a;
    if (!ctx.leaderSpeed || !ctx.netGap || *ctx.netGap > s.detectionRange) {
        a = s.speedGain * (ctx.localSpeedLimit - ctx.egoSpeed);
    } else {
        const double desiredGap = s.minGap + s.desiredTimeGap * ctx.egoSpeed;
        a = s.gapGain * (*ctx.netGap - desiredGap) + s.speedDiffGain * (*ctx.leaderSpeed - ctx.egoSpeed);
    }
    return std::clamp(a, -decelLimit, accelLimit);
}

// Constant deceleration that closes the speed difference exactly at the
// end of the gap. Zero if not closing; unbounded if the gap is already gone.
inline double required_decel(double followerSpeed, double leaderSpeed, double netGap) {
    if (followerSpeed <= leaderSpeed) return 0.0;
    if (netGap <= 0.0) return std::numeric_limits<double>::infinity();
    return (followerSpeed * followerSpeed - leaderSpeed * leaderSpeed) / (2.0 * netGap);
}

enum class LaneChange { Stay, Left, Right };

struct Neighbor {
    double speed = 0.0;  // m/s
    double netGap = 0.0; // m, bumper to bumper
};

/// View of one adjacent lane as seen by the deciding vehicle. The engine
/// marks lanes unavailable when they do not exist, are closed to the kind
/// of change being considered, or point away from the closure exit during
/// a mandatory change.
struct AdjacentLane {
    bool available = false;
    std::optional<Neighbor> leader;
    std::optional<Neighbor> follower;
    double projectedSpeed = 0.0;  // achievable speed estimate, m/s
};

struct LaneChangeInput {
    double egoSpeed = 0.0;
    double currentProjectedSpeed = 0.0;
    bool mandatory = false;  // ego must leave a closed lane
    AdjacentLane left;       // toward higher lane index
    AdjacentLane right;
};

// Urgency of a mandatory change grows linearly as the taper approaches.
inline double mandatory_urgency(double distToTaper, double warningAreaLength) {
    return std::clamp(1.0 - distToTaper / warningAreaLength, 0.0, 1.0);
}

namespace detail {

inline bool gaps_acceptable(const AdjacentLane& lane, double egoSpeed, const DriverParams& p,
                            double urgency) {
    constexpr double kMinPhysicalGap = 0.5;  // m, an instantaneous move needs body room
    const double threshold = std::min(p.decel * p.lcAssertive * (1.0 + urgency), p.emergencyDecel);
    if (lane.leader) {
        if (lane.leader->netGap < kMinPhysicalGap) return false;
        if (required_decel(egoSpeed, lane.leader->speed, lane.leader->netGap) > threshold) return false;
    }
    if (lane.follower) {
        if (lane.follower->netGap < kMinPhysicalGap) return false;
        if (required_decel(lane.follower->speed, egoSpeed, lane.follower->netGap) > threshold) return false;
    }
    return true;
}

}  // namespace detail

/// Gap-acceptance lane-change decision. A change is executed only when
/// both the ego's deceleration behind the new leader and the new
/// follower's deceleration behind the ego stay within
/// decel * lcAssertive * (1 + urgency), capped at the emergency rate.
/// Discretionary changes additionally require a speed gain of at least
/// 1 m/s over the current lane.
inline LaneChange lane_change_decision(const LaneChangeInput& in, const DriverParams& p,
                                       double urgency) {
    if (in.mandatory) {
        if (in.left.available && detail::gaps_acceptable(in.left, in.egoSpeed, p, urgency)) {
            return LaneChange::Left;
        }
        if (in.right.available && detail::gaps_acceptable(in.right, in.egoSpeed, p, urgency)) {
            return LaneChange::Right;
        }
        return LaneChange::Stay;
    }

    constexpr double kMinSpeedGain = 1.0;  // m/s
    double bestGain = kMinSpeedGain;
    LaneChange best = LaneChange::Stay;
    const AdjacentLane* lanes[2] = {&in.left, &in.right};
    const LaneChange dirs[2] = {LaneChange::Left, LaneChange::Right};
    for (int i = 0; i < 2; ++i) {
        if (!lanes[i]->available) continue;
        const double gain = lanes[i]->projectedSpeed - in.currentProjectedSpeed;
        if (gain >= bestGain && detail::gaps_acceptable(*lanes[i], in.egoSpeed, p, urgency)) {
            bestGain = gain;
            best = dirs[i];
        }
    }
    return best;
}

}  // namespace wzsim
