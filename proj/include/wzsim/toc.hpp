#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "wzsim/driving.hpp"
#include "wzsim/random.hpp"
#include "wzsim/types.hpp"

namespace wzsim {

// Stopping distance of a constant-rate braking maneuver from the current
// speed: 0.5 * v^2 / b.
inline double mrm_dist(double currentSpeed, double mrmBrakeRate) {
    return 0.5 * currentSpeed * currentSpeed / mrmBrakeRate;
}

/// Dynamic takeover-request trigger: fires when the remaining distance to
/// the obstruction is below threshold * speed plus the distance a
/// fallback stop would need.
inline bool check_dynamic_tor(double distToObstruction, double currentSpeed, double threshold,
                              double mrmBrakeRate) {
    return distToObstruction < threshold * currentSpeed + mrm_dist(currentSpeed, mrmBrakeRate);
}

// Driver performance at tSinceTakeover seconds after taking over:
// min(1, A0 + r*t).
inline double awareness(double A0, double r, double tSinceTakeover) {
    return std::min(1.0, A0 + r * tSinceTakeover);
}

/// Degraded driving parameters at awareness level A. Imperfection blends
/// linearly toward 1 and the desired headway inflates up to twice its
/// base value; A = 1 returns the base parameters unchanged.
inline DriverParams effective_driver_params(const DriverParams& base, double A) {
    DriverParams p = base;
    p.sigma = base.sigma + (1.0 - A) * (1.0 - base.sigma);
    p.tau = base.tau * (2.0 - A);
    return p;
}

enum class ToCPhase { Automated, TorPending, Recovering, Manual, MrmActive, MrmStopped };

inline const char* to_string(ToCPhase p) {
    switch (p) {
        case ToCPhase::Automated: return "automated";
        case ToCPhase::TorPending: return "torPending";
        case ToCPhase::Recovering: return "recovering";
        case ToCPhase::Manual: return "manual";
        case ToCPhase::MrmActive: return "mrm";
        case ToCPhase::MrmStopped: return "mrm";
    }
    return "automated";
}

/// Control-transition state of one automated vehicle. Phases only move
/// forward within a trial: Automated -> TorPending -> {Recovering |
/// MrmActive -> MrmStopped -> Recovering} -> Manual.
struct ToCState {
    ToCPhase phase = ToCPhase::Automated;
    double torTime = 0.0;       // s, TOR issue time
    double responseTime = 0.0;  // s, sampled driver response delay
    double takeoverTime = 0.0;  // s, entry to Recovering
    double A0 = 1.0;            // awareness at takeover
    double r = 0.0;             // awareness recovery rate, 1/s
    double mrmStopTime = 0.0;   // s, standstill reached
};

enum class TocEventKind { TorIssued, TakenOver, MrmStarted, MrmStopped };

inline const char* to_string(TocEventKind k) {
    switch (k) {
        case TocEventKind::TorIssued: return "torIssued";
        case TocEventKind::TakenOver: return "takenOver";
        case TocEventKind::MrmStarted: return "mrmStarted";
        case TocEventKind::MrmStopped: return "mrmStopped";
    }
    return "torIssued";
}

struct TocEvent {
    TocEventKind kind = TocEventKind::TorIssued;
    double time = 0.0;
    int vehicleId = 0;
    VehicleKind vehicleClass = VehicleKind::Small;
};

/// Issue a TOR to a vehicle in automated mode. Samples the driver's
/// response delay and records the TorIssued event, which is what the
/// disengagement indicator counts.
inline ToCState issue_tor(const ToCState& state, double now, const TruncNormalSpec& responseTimeDist,
                          Rng& rng, int vehicleId, VehicleKind cls, std::vector<TocEvent>& events) {
    if (state.phase != ToCPhase::Automated) {
        throw std::logic_error("issue_tor: vehicle is not in automated mode");
    }
    ToCState next = state;
    next.phase = ToCPhase::TorPending;
    next.torTime = now;
    next.responseTime = responseTimeDist.sample(rng);
    events.push_back({TocEventKind::TorIssued, now, vehicleId, cls});
    return next;
}

/// Advance the phase machine by one step. currentSpeed is the vehicle's
/// speed at time `now`; the engine applies the MRM braking itself and this
/// function only observes standstill. A response delay within the lead
/// time means a successful takeover (ties included); exceeding it starts
/// the MRM, and the residual delay runs after the vehicle has stopped.
inline ToCState step_toc(const ToCState& state, double now, double currentSpeed,
                         const TakeoverStyle& style, double torLeadTime, Rng& rng, int vehicleId,
                         VehicleKind cls, std::vector<TocEvent>& events) {
    ToCState s = state;
    switch (s.phase) {
        case ToCPhase::TorPending:
            if (s.responseTime <= torLeadTime) {
                if (now >= s.torTime + s.responseTime) {
                    s.phase = ToCPhase::Recovering;
                    s.takeoverTime = now;
                    s.A0 = style.sampleInitialAwareness(rng);
                    s.r = style.sampleRecoveryRate(rng);
                    events.push_back({TocEventKind::TakenOver, now, vehicleId, cls});
                }
            } else if (now >= s.torTime + torLeadTime) {
                s.phase = ToCPhase::MrmActive;
                events.push_back({TocEventKind::MrmStarted, now, vehicleId, cls});
            }
            break;
        case ToCPhase::MrmActive:
            if (currentSpeed <= 0.0) {
                s.phase = ToCPhase::MrmStopped;
                s.mrmStopTime = now;
                events.push_back({TocEventKind::MrmStopped, now, vehicleId, cls});
            }
            break;
        case ToCPhase::MrmStopped:
            if (now >= s.mrmStopTime + (s.responseTime - torLeadTime)) {
                s.phase = ToCPhase::Recovering;
                s.takeoverTime = now;
                s.A0 = style.sampleInitialAwareness(rng);
                s.r = style.sampleRecoveryRate(rng);
                events.push_back({TocEventKind::TakenOver, now, vehicleId, cls});
            }
            break;
        default:
            break;
    }
    if (s.phase == ToCPhase::Recovering &&
        awareness(s.A0, s.r, now - s.takeoverTime) >= 1.0) {
        s.phase = ToCPhase::Manual;
    }
    return s;
}

/// Headway-preparation acceleration while a TOR is pending: nudge the time
/// headway toward the manual driver's comfort zone without ever braking
/// hard. Output magnitude is bounded by 1.5 m/s^2.
inline double gap_preparation_accel(const FollowContext& ctx, double targetHeadway,
                                    const AccSettings& s, double accelLimit, double decelLimit) {
    constexpr double kGapPrepBound = 1.5;  // m/s^2
    double a;
    if (!ctx.leaderSpeed || !ctx.netGap || *ctx.netGap > s.detectionRange) {
        a = acc_acceleration(ctx, s, accelLimit, decelLimit);
    } else {
        const double headway = *ctx.netGap / std::max(ctx.egoSpeed, 0.1);
        if (headway >= targetHeadway) {
            a = acc_acceleration(ctx, s, accelLimit, decelLimit);
        } else {
            const double desiredGap = s.minGap + targetHeadway * ctx.egoSpeed;
            a = s.gapGain * (*ctx.netGap - desiredGap) +
                s.speedDiffGain * (*ctx.leaderSpeed - ctx.egoSpeed);
        }
    }
    return std::clamp(a, -kGapPrepBound, kGapPrepBound);
}

}  // namespace wzsim
