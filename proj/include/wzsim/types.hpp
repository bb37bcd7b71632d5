#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "wzsim/random.hpp"

namespace wzsim {

constexpr double kmh_to_ms(double kmh) { return kmh / 3.6; }
constexpr double ms_to_kmh(double ms) { return ms * 3.6; }

enum class VehicleKind { Small, Large };

inline const char* to_string(VehicleKind k) {
    return k == VehicleKind::Small ? "small" : "large";
}

struct VehicleClass {
    VehicleKind kind = VehicleKind::Small;
    double length = 5.0;        // m
    double maxSpeed = 33.33;    // m/s
    double defaultAccel = 2.0;  // m/s^2, mean of the per-vehicle draw
    double defaultDecel = 3.5;  // m/s^2
};

inline VehicleClass small_vehicle_class() {
    return VehicleClass{VehicleKind::Small, 5.0, 33.33, 2.0, 3.5};
}

// Trucks run below the posted limit on the open road and accelerate and
// brake more gently than passenger cars.
inline VehicleClass large_vehicle_class() {
    return VehicleClass{VehicleKind::Large, 12.0, 20.0, 1.2, 2.5};
}

/// Per-vehicle behavioral parameters. All values are sampled once at
/// insertion and stay fixed for the vehicle's trip.
struct DriverParams {
    double sigma = 0.2;          // imperfection, in [0, 1]
    double tau = 0.6;            // desired time headway, s
    double decel = 3.5;          // comfortable braking, m/s^2
    double accel = 2.0;          // m/s^2
    double emergencyDecel = 9.0; // m/s^2
    double lcAssertive = 1.3;    // willingness to accept tighter gaps, >= 1
};

// Draw order (sigma, tau, decel, accel) is fixed; reordering the draws
// changes every downstream trajectory for a given seed.
inline DriverParams sample_driver_params(const VehicleClass& cls, double lcAssertive, Rng& rng) {
    DriverParams p;
    p.sigma = sample_truncated_normal(0.2, 0.5, 0.0, 1.0, rng);
    p.tau = sample_truncated_normal(0.6, 0.5, 0.2, 2.5, rng);
    p.decel = sample_truncated_normal(cls.defaultDecel, 1.0, 1.5, 9.0, rng);
    p.accel = sample_truncated_normal(cls.defaultAccel, 1.0, 0.5, 5.0, rng);
    p.emergencyDecel = 9.0;
    p.lcAssertive = lcAssertive;
    return p;
}

enum class TakeoverStyleKind { Aggressive, Normal, Conservative };

inline const char* to_string(TakeoverStyleKind k) {
    switch (k) {
        case TakeoverStyleKind::Aggressive: return "aggressive";
        case TakeoverStyleKind::Normal: return "normal";
        case TakeoverStyleKind::Conservative: return "conservative";
    }
    return "normal";
}

struct GaussianSpec {
    double mean = 0.0;
    double sd = 0.0;
};

/// Takeover style: how attentive the driver is when control is handed
/// back. Sampled initial awareness is clamped to [0, 1], the recovery
/// rate to a small positive floor.
struct TakeoverStyle {
    TakeoverStyleKind name = TakeoverStyleKind::Normal;
    GaussianSpec initialAwareness{0.5, 0.3};  // A0
    GaussianSpec recoveryRate{0.2, 0.1};      // 1/s
    double mrmDecel = 3.0;                    // m/s^2

    double sampleInitialAwareness(Rng& rng) const {
        return std::clamp(rng.normal(initialAwareness.mean, initialAwareness.sd), 0.0, 1.0);
    }
    double sampleRecoveryRate(Rng& rng) const {
        return std::max(0.01, rng.normal(recoveryRate.mean, recoveryRate.sd));
    }
};

inline TakeoverStyle takeover_style(TakeoverStyleKind kind) {
    TakeoverStyle s;
    s.name = kind;
    switch (kind) {
        case TakeoverStyleKind::Aggressive: s.initialAwareness = {0.7, 0.3}; break;
        case TakeoverStyleKind::Normal: s.initialAwareness = {0.5, 0.3}; break;
        case TakeoverStyleKind::Conservative: s.initialAwareness = {0.3, 0.3}; break;
    }
    s.recoveryRate = {0.2, 0.1};
    s.mrmDecel = 3.0;
    return s;
}

/// One-direction freeway stretch with a lane closure. Stations are
/// measured along the road from the entry point; lanes are numbered from
/// 1 (rightmost). The taper directly follows the warning area.
struct WorkZoneLayout {
    int laneCount = 4;
    std::vector<int> closedLanes{1, 2};
    double roadLength = 5000.0;          // m
    double warningAreaStart = 2400.0;    // m
    double warningAreaLength = 600.0;    // m
    double taperLength = 150.0;          // m
    double activityAreaLength = 500.0;   // m
    double downstreamLength = 100.0;     // m
    double normalSpeedLimit = kmh_to_ms(80.0);    // m/s
    double workZoneSpeedLimit = kmh_to_ms(40.0);  // m/s

    double taperStart() const { return warningAreaStart + warningAreaLength; }
    double closureEnd() const { return taperStart() + taperLength + activityAreaLength; }

    bool isClosed(int lane) const {
        return std::find(closedLanes.begin(), closedLanes.end(), lane) != closedLanes.end();
    }

    // Stepped limit profile: the warning area drops the limit toward the
    // work zone value in three equal steps; the work zone value holds
    // through taper and activity area; the normal limit is restored
    // downstream of the closure.
    double speedLimitAt(double pos) const {
        if (pos < warningAreaStart) return normalSpeedLimit;
        if (pos < taperStart()) {
            const double frac = (pos - warningAreaStart) / warningAreaLength;
            const int third = std::min(2, static_cast<int>(frac * 3.0));
            const double drop = normalSpeedLimit - workZoneSpeedLimit;
            return normalSpeedLimit - drop * static_cast<double>(third + 1) / 3.0;
        }
        if (pos < closureEnd()) return workZoneSpeedLimit;
        return normalSpeedLimit;
    }
};

}  // namespace wzsim
