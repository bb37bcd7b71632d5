#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wzsim/driving.hpp"
#include "wzsim/random.hpp"
#include "wzsim/scenario.hpp"
#include "wzsim/toc.hpp"
#include "wzsim/types.hpp"

namespace wzsim {

struct Arrival {
    double time = 0.0;  // s
    VehicleKind kind = VehicleKind::Small;
    bool automated = false;
    int lane = 1;
};

/// Poisson arrival schedule over warmup + duration. Class and automation
/// are independent Bernoulli draws; large vehicles prefer the rightmost
/// two lanes, small vehicles spread uniformly over all entry lanes.
/// Arrivals the road cannot absorb queue at the entry without being
/// dropped (the engine handles the queueing).
inline std::vector<Arrival> generate_demand(const ScenarioConfig& cfg, Rng& rng) {
    std::vector<Arrival> schedule;
    const double horizon = cfg.warmup + cfg.duration;
    const double rate = cfg.trafficVolume / 3600.0;  // veh/s
    schedule.reserve(static_cast<size_t>(rate * horizon * 1.2) + 16);
    double t = rng.exponential(rate);
    while (t < horizon) {
        Arrival a;
        a.time = t;
        a.kind = rng.bernoulli(cfg.largeVehicleShare) ? VehicleKind::Large : VehicleKind::Small;
        a.automated = rng.bernoulli(cfg.mpr);
        if (a.kind == VehicleKind::Large && rng.bernoulli(0.8)) {
            a.lane = 1 + static_cast<int>(rng.uniform01() * 2.0);
            a.lane = std::min(a.lane, std::min(2, cfg.layout.laneCount));
        } else {
            a.lane = 1 + static_cast<int>(rng.uniform01() * cfg.layout.laneCount);
            a.lane = std::min(a.lane, cfg.layout.laneCount);
        }
        schedule.push_back(a);
        t += rng.exponential(rate);
    }
    return schedule;
}

enum class DriveMode { Manual, Automated, TorPending, Recovering, Mrm };

inline const char* to_string(DriveMode m) {
    switch (m) {
        case DriveMode::Manual: return "manual";
        case DriveMode::Automated: return "automated";
        case DriveMode::TorPending: return "torPending";
        case DriveMode::Recovering: return "recovering";
        case DriveMode::Mrm: return "mrm";
    }
    return "manual";
}

inline std::optional<DriveMode> drive_mode_from_string(const std::string& s) {
    if (s == "manual") return DriveMode::Manual;
    if (s == "automated") return DriveMode::Automated;
    if (s == "torPending") return DriveMode::TorPending;
    if (s == "recovering") return DriveMode::Recovering;
    if (s == "mrm") return DriveMode::Mrm;
    return std::nullopt;
}

struct VehicleState {
    int id = 0;
    VehicleClass cls;
    bool automated = false;
    int lane = 1;
    double position = 0.0;  // m, front bumper
    double speed = 0.0;     // m/s
    double accel = 0.0;     // m/s^2, realized over the last step
    DriverParams driver;
    ToCState toc;
    double targetHeadway = 0.0;  // s, headway preparation goal while TOR pending
    double lastLaneChangeTime = -1e18;

    DriveMode mode() const {
        if (!automated) return DriveMode::Manual;
        switch (toc.phase) {
            case ToCPhase::Automated: return DriveMode::Automated;
            case ToCPhase::TorPending: return DriveMode::TorPending;
            case ToCPhase::Recovering: return DriveMode::Recovering;
            case ToCPhase::Manual: return DriveMode::Manual;
            case ToCPhase::MrmActive:
            case ToCPhase::MrmStopped: return DriveMode::Mrm;
        }
        return DriveMode::Automated;
    }
};

struct TrajectorySample {
    double time = 0.0;
    int vehicleId = 0;
    VehicleKind vehicleClass = VehicleKind::Small;
    bool automated = false;
    int lane = 1;
    double position = 0.0;
    double speed = 0.0;
    double accel = 0.0;
    DriveMode mode = DriveMode::Manual;
};

struct TrajectoryConsumer {
    virtual ~TrajectoryConsumer() = default;
    virtual void onSample(const TrajectorySample& s) = 0;
};

struct SimSummary {
    std::uint64_t inserted = 0;
    std::uint64_t exited = 0;
    std::uint64_t onRoad = 0;
    std::uint64_t queued = 0;
    std::uint64_t throughput = 0;     // exits within the recorded window
    std::uint64_t laneChanges = 0;
    std::uint64_t disengagements = 0; // recorded TorIssued
    std::uint64_t mrms = 0;           // recorded MrmStarted
    double meanSpeed = 0.0;           // over recorded samples, m/s
    std::uint64_t samples = 0;
};

class SimulationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Diagnostic switches for property checks; defaults model the work zone
/// as configured.
struct EngineOptions {
    bool enforceClosure = true;   // closure barrier, TOR triggering, mandatory exits
    bool allowLaneChanges = true;
    std::optional<double> sigmaOverride;  // force a fixed driver imperfection
};

/// Deterministic fixed-step single-trial simulation. Sub-phase order per
/// step: arrivals, TOR checks, ToC stepping, lane changes, longitudinal
/// update, integration, removal, trajectory sampling. Vehicles are
/// processed upstream-to-downstream within each phase, and all randomness
/// flows through one seeded stream, so a seed fixes the full log.
class Simulation {
public:
    explicit Simulation(const ValidatedScenario& scenario)
        : Simulation(scenario, scenario.config().seed) {}

    Simulation(const ValidatedScenario& scenario, std::uint64_t seed, EngineOptions options = {})
        : cfg_(scenario.config()), opts_(options), rng_(seed) {
        dt_ = cfg_.stepLength;
        warmupSteps_ = static_cast<long long>(std::llround(cfg_.warmup / dt_));
        totalSteps_ = warmupSteps_ + static_cast<long long>(std::llround(cfg_.duration / dt_));
        schedule_ = generate_demand(cfg_, rng_);
        nextArrival_ = 0;
        laneQueues_.assign(static_cast<size_t>(cfg_.layout.laneCount) + 1, {});
    }

    void setTrajectoryConsumer(TrajectoryConsumer* c) { consumer_ = c; }

    double currentTime() const { return static_cast<double>(stepIndex_) * dt_; }
    bool finished() const { return stepIndex_ >= totalSteps_; }

    const std::vector<VehicleState>& fleet() const { return fleet_; }
    const std::vector<TocEvent>& tocEvents() const { return recordedToc_; }

    SimSummary summary() const {
        SimSummary s = counters_;
        s.onRoad = fleet_.size();
        s.queued = queuedCount();
        s.meanSpeed = s.samples ? speedSum_ / static_cast<double>(s.samples) : 0.0;
        return s;
    }

    /// Drop a vehicle onto the road directly; used to stage specific
    /// situations in tests and tools.
    int injectVehicle(int lane, double position, double speed, bool automated,
                      const VehicleClass& cls, const DriverParams& p) {
        VehicleState v;
        v.id = nextId_++;
        v.cls = cls;
        v.automated = automated;
        v.lane = lane;
        v.position = position;
        v.speed = speed;
        v.driver = p;
        fleet_.push_back(v);
        ++counters_.inserted;
        return v.id;
    }

    void run() {
        while (!finished()) step();
    }

    void step() {
        const double t = currentTime();
        rebuildLaneLists();
        insertArrivals(t);
        buildOrder();
        torChecks(t);
        stepTocAll(t);
        laneChangePhase(t);
        longitudinalPhase(t);
        integrateAndCheck(t);
        removeExited();
        sampleTrajectories(t + dt_);
        ++stepIndex_;
    }

private:
    struct QueuedArrival {
        Arrival arrival;
        DriverParams driver;
        bool sampled = false;
    };

    // -- step phases --------------------------------------------------------

    void rebuildLaneLists() {
        laneLists_.assign(static_cast<size_t>(cfg_.layout.laneCount) + 1, {});
        for (int i = 0; i < static_cast<int>(fleet_.size()); ++i) {
            laneLists_[static_cast<size_t>(fleet_[i].lane)].push_back(i);
        }
        for (auto& lane : laneLists_) sortLane(lane);
    }

    void insertArrivals(double t) {
        while (nextArrival_ < schedule_.size() && schedule_[nextArrival_].time <= t) {
            const Arrival& a = schedule_[nextArrival_++];
            laneQueues_[static_cast<size_t>(a.lane)].push_back({a, DriverParams{}, false});
        }
        for (int lane = 1; lane <= cfg_.layout.laneCount; ++lane) {
            auto& queue = laneQueues_[static_cast<size_t>(lane)];
            while (!queue.empty()) {
                QueuedArrival& q = queue.front();
                const VehicleClass cls = q.arrival.kind == VehicleKind::Large
                                             ? large_vehicle_class()
                                             : small_vehicle_class();
                if (!q.sampled) {
                    q.driver = sample_driver_params(cls, cfg_.lcAssertive, rng_);
                    if (opts_.sigmaOverride) q.driver.sigma = *opts_.sigmaOverride;
                    q.sampled = true;
                }
                const double insertSpeed =
                    std::min(0.8 * cfg_.layout.speedLimitAt(0.0), cls.maxSpeed);
                const auto& laneList = laneLists_[static_cast<size_t>(lane)];
                if (!laneList.empty()) {
                    const VehicleState& last = fleet_[static_cast<size_t>(laneList.front())];
                    const double gap = last.position - last.cls.length;  // entry at position 0
                    if (gap <= 0.0 ||
                        krauss_safe_speed(last.speed, gap, q.driver.decel, q.driver.tau) < insertSpeed) {
                        break;  // head of queue blocked; lane queue waits
                    }
                }
                VehicleState v;
                v.id = nextId_++;
                v.cls = cls;
                v.automated = q.arrival.automated;
                v.lane = lane;
                v.position = 0.0;
                v.speed = insertSpeed;
                v.driver = q.driver;
                fleet_.push_back(v);
                ++counters_.inserted;
                insertIntoLane(lane, static_cast<int>(fleet_.size()) - 1);
                queue.pop_front();
            }
        }
    }

    void buildOrder() {
        order_.resize(fleet_.size());
        for (int i = 0; i < static_cast<int>(fleet_.size()); ++i) order_[static_cast<size_t>(i)] = i;
        std::sort(order_.begin(), order_.end(), [this](int a, int b) {
            const auto& va = fleet_[static_cast<size_t>(a)];
            const auto& vb = fleet_[static_cast<size_t>(b)];
            if (va.position != vb.position) return va.position < vb.position;
            return va.id < vb.id;
        });
    }

    void torChecks(double t) {
        const double taper = cfg_.layout.taperStart();
        for (int i : order_) {
            VehicleState& v = fleet_[static_cast<size_t>(i)];
            if (!v.automated || v.toc.phase != ToCPhase::Automated) continue;
            if (!isClosedLane(v.lane) || v.position > taper) continue;
            const double dist = taper - v.position;
            if (check_dynamic_tor(dist, v.speed, cfg_.disengagementThreshold,
                                  cfg_.takeoverStyle.mrmDecel)) {
                v.toc = issue_tor(v.toc, t, cfg_.responseTime, rng_, v.id, v.cls.kind, pendingEvents_);
                v.targetHeadway = std::max(cfg_.acc.desiredTimeGap, v.driver.tau * 1.5);
            }
        }
        flushEvents();
    }

    void stepTocAll(double t) {
        for (int i : order_) {
            VehicleState& v = fleet_[static_cast<size_t>(i)];
            if (!v.automated || v.toc.phase == ToCPhase::Automated) continue;
            v.toc = step_toc(v.toc, t, v.speed, cfg_.takeoverStyle, cfg_.torLeadTime, rng_, v.id,
                             v.cls.kind, pendingEvents_);
        }
        flushEvents();
    }

    bool mayChangeLanes(const VehicleState& v) const {
        if (!v.automated) return true;
        switch (v.toc.phase) {
            case ToCPhase::Automated:
            case ToCPhase::Manual:
            case ToCPhase::Recovering: return true;
            default: return false;
        }
    }

    void laneChangePhase(double t) {
        if (!opts_.allowLaneChanges) return;
        const double taper = cfg_.layout.taperStart();
        for (int i : order_) {
            VehicleState& v = fleet_[static_cast<size_t>(i)];
            if (t - v.lastLaneChangeTime < kLaneChangeHold) continue;
            if (!mayChangeLanes(v)) continue;
            const bool inClosed = isClosedLane(v.lane);
            // Automated mode never performs the mandatory closure exit;
            // that is exactly the situation that triggers the TOR.
            const bool mandatory = inClosed && !(v.automated && v.toc.phase == ToCPhase::Automated);

            LaneChangeInput in;
            in.egoSpeed = v.speed;
            in.mandatory = mandatory;
            in.currentProjectedSpeed = projectedSpeed(v, v.lane);
            fillAdjacent(v, v.lane + 1, mandatory, in.left);
            fillAdjacent(v, v.lane - 1, mandatory, in.right);
            const double urgency =
                mandatory ? mandatory_urgency(taper - v.position, cfg_.layout.warningAreaLength) : 0.0;
            const LaneChange decision = lane_change_decision(in, v.driver, urgency);
            if (decision == LaneChange::Stay) continue;
            const int target = decision == LaneChange::Left ? v.lane + 1 : v.lane - 1;
            removeFromLane(v.lane, i);
            v.lane = target;
            v.lastLaneChangeTime = t;
            insertIntoLane(target, i);
            ++counters_.laneChanges;
        }
    }

    void longitudinalPhase(double t) {
        newSpeed_.resize(fleet_.size());
        const double taper = cfg_.layout.taperStart();
        for (size_t li = 1; li < laneLists_.size(); ++li) {
            const auto& lane = laneLists_[li];
            for (size_t k = 0; k < lane.size(); ++k) {
                const int i = lane[k];
                const VehicleState& v = fleet_[static_cast<size_t>(i)];
                const VehicleState* leader =
                    k + 1 < lane.size() ? &fleet_[static_cast<size_t>(lane[k + 1])] : nullptr;
                double realGap = std::numeric_limits<double>::infinity();
                double realSpeed = 0.0;
                if (leader) {
                    realGap = std::max(0.0, leader->position - leader->cls.length - v.position);
                    realSpeed = leader->speed;
                }
                const bool inMrm =
                    v.toc.phase == ToCPhase::MrmActive || v.toc.phase == ToCPhase::MrmStopped;
                const bool barrier = isClosedLane(v.lane) && v.position <= taper && !inMrm;
                const double barrierGap = barrier ? std::max(0.0, taper - v.position)
                                                  : std::numeric_limits<double>::infinity();

                FollowContext ctx;
                ctx.egoSpeed = v.speed;
                ctx.localSpeedLimit =
                    std::min(anticipatedLimit(v.position, v.speed, v.driver.decel), v.cls.maxSpeed);
                ctx.dt = dt_;

                double next = 0.0;
                switch (v.mode()) {
                    case DriveMode::Manual:
                    case DriveMode::Recovering: {
                        // The nearer of the real leader and the closure barrier is
                        // what the driver follows.
                        if (barrierGap < realGap) {
                            ctx.leaderSpeed = 0.0;
                            ctx.netGap = barrierGap;
                        } else if (leader) {
                            ctx.leaderSpeed = realSpeed;
                            ctx.netGap = realGap;
                        }
                        if (v.mode() == DriveMode::Recovering) {
                            const double A = awareness(v.toc.A0, v.toc.r, t - v.toc.takeoverTime);
                            next = krauss_speed_update(ctx, effective_driver_params(v.driver, A), rng_);
                        } else {
                            next = krauss_speed_update(ctx, v.driver, rng_);
                        }
                        break;
                    }
                    case DriveMode::Automated:
                    case DriveMode::TorPending: {
                        if (leader) {
                            ctx.leaderSpeed = realSpeed;
                            ctx.netGap = realGap;
                        }
                        double a;
                        if (v.mode() == DriveMode::Automated) {
                            a = acc_acceleration(ctx, cfg_.acc, v.driver.accel, v.driver.decel);
                        } else {
                            a = gap_preparation_accel(ctx, v.targetHeadway, cfg_.acc, v.driver.accel,
                                                      v.driver.decel);
                        }
                        next = std::clamp(v.speed + a * dt_, 0.0, ctx.localSpeedLimit);
                        if (leader) {
                            next = std::min(next,
                                            krauss_safe_speed(realSpeed, realGap, v.driver.decel, dt_));
                        }
                        if (barrier) {
                            // The system plans its obstruction approach at the rate its
                            // own fallback stop would use, so an MRM triggered during
                            // the approach still stops short of the taper.
                            const double planDecel =
                                std::min(v.driver.decel, cfg_.takeoverStyle.mrmDecel);
                            next = std::min(next, krauss_safe_speed(0.0, barrierGap, planDecel, dt_));
                        }
                        break;
                    }
                    case DriveMode::Mrm: {
                        if (v.toc.phase == ToCPhase::MrmStopped) {
                            next = 0.0;
                        } else {
                            next = std::max(0.0, v.speed - cfg_.takeoverStyle.mrmDecel * dt_);
                            // No steering response and no barrier: the fallback stop may
                            // run into the closed area. Physical vehicles ahead still
                            // bound the speed via an emergency envelope.
                            if (leader) {
                                next = std::min(next, krauss_safe_speed(realSpeed, realGap,
                                                                        v.driver.emergencyDecel, dt_));
                            }
                        }
                        break;
                    }
                }
                // Two-regime deceleration floor: comfortable braking unless the
                // comfortable path would make an emergency stop behind the
                // constraint infeasible. The MRM runs at its own planned rate and
                // only gets the emergency floor. Position-feasibility caps win
                // last, so bumpers never overlap and the taper is never crossed
                // while the closure applies.
                double floorRate = inMrm ? v.driver.emergencyDecel : v.driver.decel;
                if (!inMrm) {
                    const double conGap = std::min(realGap, barrierGap);
                    if (conGap < std::numeric_limits<double>::infinity()) {
                        const double conSpeed = barrierGap < realGap ? 0.0 : realSpeed;
                        const double comfortNext = v.speed - v.driver.decel * dt_;
                        const double emergencyFeasible =
                            std::sqrt(conSpeed * conSpeed + 2.0 * v.driver.emergencyDecel * conGap);
                        if (comfortNext > emergencyFeasible) floorRate = v.driver.emergencyDecel;
                    }
                }
                next = std::max(next, v.speed - floorRate * dt_);
                if (leader) next = std::min(next, realGap / dt_);
                if (barrier) next = std::min(next, std::max(0.0, barrierGap - 0.01) / dt_);
                newSpeed_[static_cast<size_t>(i)] = std::max(0.0, next);
            }
        }
    }

    // Local limit with anticipation of the signed drops ahead: drivers glide
    // down at comfortable deceleration instead of braking on the line. The
    // one-step lookahead keeps the speed at or below the limit that applies
    // at the end of the step.
    double anticipatedLimit(double pos, double speed, double comfortDecel) const {
        const WorkZoneLayout& L = cfg_.layout;
        double allowed = L.speedLimitAt(pos);
        const double drop = L.normalSpeedLimit - L.workZoneSpeedLimit;
        if (drop <= 0.0) return allowed;
        for (int k = 0; k < 3; ++k) {
            const double station = L.warningAreaStart + k * L.warningAreaLength / 3.0;
            if (pos < station) {
                const double after = L.normalSpeedLimit - drop * (k + 1) / 3.0;
                const double run = std::max(0.0, station - pos - speed * dt_);
                const double reach = std::sqrt(after * after + 2.0 * comfortDecel * run);
                allowed = std::min(allowed, reach);
            }
        }
        return allowed;
    }

    void integrateAndCheck(double t) {
        for (int i = 0; i < static_cast<int>(fleet_.size()); ++i) {
            VehicleState& v = fleet_[static_cast<size_t>(i)];
            const double ns = newSpeed_[static_cast<size_t>(i)];
            v.accel = (ns - v.speed) / dt_;
            v.speed = ns;
            v.position += ns * dt_;
        }
        for (auto& lane : laneLists_) sortLane(lane);
        for (size_t li = 1; li < laneLists_.size(); ++li) {
            const auto& lane = laneLists_[li];
            for (size_t k = 0; k + 1 < lane.size(); ++k) {
                const VehicleState& follower = fleet_[static_cast<size_t>(lane[k])];
                const VehicleState& leader = fleet_[static_cast<size_t>(lane[k + 1])];
                const double gap = leader.position - leader.cls.length - follower.position;
                if (gap < -1e-9) {
                    std::ostringstream os;
                    os << "lane overlap at t=" << t + dt_ << "s lane=" << li << ": vehicle "
                       << follower.id << " at " << follower.position << " m overlaps vehicle "
                       << leader.id << " at " << leader.position << " m (gap " << gap << " m)";
                    throw SimulationError(os.str());
                }
            }
        }
    }

    void removeExited() {
        const bool recorded = stepIndex_ + 1 > warmupSteps_;
        for (int i = static_cast<int>(fleet_.size()) - 1; i >= 0; --i) {
            if (fleet_[static_cast<size_t>(i)].position > cfg_.layout.roadLength) {
                ++counters_.exited;
                if (recorded) ++counters_.throughput;
                fleet_[static_cast<size_t>(i)] = fleet_.back();
                fleet_.pop_back();
            }
        }
    }

    void sampleTrajectories(double time) {
        if (stepIndex_ + 1 <= warmupSteps_) return;
        byId_.resize(fleet_.size());
        for (int i = 0; i < static_cast<int>(fleet_.size()); ++i) byId_[static_cast<size_t>(i)] = i;
        std::sort(byId_.begin(), byId_.end(), [this](int a, int b) {
            return fleet_[static_cast<size_t>(a)].id < fleet_[static_cast<size_t>(b)].id;
        });
        for (int i : byId_) {
            const VehicleState& v = fleet_[static_cast<size_t>(i)];
            counters_.samples++;
            speedSum_ += v.speed;
            if (!consumer_) continue;
            TrajectorySample s;
            s.time = time;
            s.vehicleId = v.id;
            s.vehicleClass = v.cls.kind;
            s.automated = v.automated;
            s.lane = v.lane;
            s.position = v.position;
            s.speed = v.speed;
            s.accel = v.accel;
            s.mode = v.mode();
            consumer_->onSample(s);
        }
    }

    // -- helpers ------------------------------------------------------------

    void flushEvents() {
        for (const TocEvent& e : pendingEvents_) {
            if (e.kind == TocEventKind::TorIssued && stepIndex_ + 1 > warmupSteps_) {
                recordedTocVehicles_.insert(e.vehicleId);
            }
            if (recordedTocVehicles_.count(e.vehicleId)) {
                recordedToc_.push_back(e);
                if (e.kind == TocEventKind::TorIssued) ++counters_.disengagements;
                if (e.kind == TocEventKind::MrmStarted) ++counters_.mrms;
            }
        }
        pendingEvents_.clear();
    }

    void sortLane(std::vector<int>& lane) {
        std::sort(lane.begin(), lane.end(), [this](int a, int b) {
            const auto& va = fleet_[static_cast<size_t>(a)];
            const auto& vb = fleet_[static_cast<size_t>(b)];
            if (va.position != vb.position) return va.position < vb.position;
            return va.id < vb.id;
        });
    }

    void removeFromLane(int lane, int idx) {
        auto& list = laneLists_[static_cast<size_t>(lane)];
        list.erase(std::find(list.begin(), list.end(), idx));
    }

    void insertIntoLane(int lane, int idx) {
        auto& list = laneLists_[static_cast<size_t>(lane)];
        const auto key = std::make_pair(fleet_[static_cast<size_t>(idx)].position,
                                        fleet_[static_cast<size_t>(idx)].id);
        auto it = std::lower_bound(list.begin(), list.end(), key,
                                   [this](int a, const std::pair<double, int>& k) {
                                       const auto& va = fleet_[static_cast<size_t>(a)];
                                       if (va.position != k.first) return va.position < k.first;
                                       return va.id < k.second;
                                   });
        list.insert(it, idx);
    }

    // Achievable speed in a lane, used as the lane-change motivation proxy.
    double projectedSpeed(const VehicleState& v, int lane) const {
        double proj = std::min(cfg_.layout.speedLimitAt(v.position), v.cls.maxSpeed);
        const auto [leader, gap] = leaderIn(lane, v);
        if (leader) {
            proj = std::min(proj, krauss_safe_speed(leader->speed, gap, v.driver.decel, v.driver.tau));
        }
        if (isClosedLane(lane) && v.position <= cfg_.layout.taperStart()) {
            const double barrierGap = cfg_.layout.taperStart() - v.position;
            proj = std::min(proj, krauss_safe_speed(0.0, barrierGap, v.driver.decel, v.driver.tau));
        }
        return proj;
    }

    std::vector<int>::const_iterator lowerBoundInLane(const std::vector<int>& list,
                                                      double position) const {
        return std::lower_bound(list.begin(), list.end(), position, [this](int a, double pos) {
            return fleet_[static_cast<size_t>(a)].position < pos;
        });
    }

    std::pair<const VehicleState*, double> leaderIn(int lane, const VehicleState& v) const {
        const auto& list = laneLists_[static_cast<size_t>(lane)];
        auto it = lowerBoundInLane(list, v.position);
        while (it != list.end() && fleet_[static_cast<size_t>(*it)].id == v.id) ++it;
        if (it == list.end()) return {nullptr, std::numeric_limits<double>::infinity()};
        const VehicleState& o = fleet_[static_cast<size_t>(*it)];
        return {&o, o.position - o.cls.length - v.position};
    }

    std::pair<const VehicleState*, double> followerIn(int lane, const VehicleState& v) const {
        const auto& list = laneLists_[static_cast<size_t>(lane)];
        auto it = lowerBoundInLane(list, v.position);
        while (it != list.begin()) {
            --it;
            const VehicleState& o = fleet_[static_cast<size_t>(*it)];
            if (o.id == v.id) continue;
            return {&o, v.position - v.cls.length - o.position};
        }
        return {nullptr, std::numeric_limits<double>::infinity()};
    }

    bool isClosedLane(int lane) const { return opts_.enforceClosure && cfg_.layout.isClosed(lane); }

    int distToOpen(int lane) const {
        int best = std::numeric_limits<int>::max();
        for (int l = 1; l <= cfg_.layout.laneCount; ++l) {
            if (!isClosedLane(l)) best = std::min(best, std::abs(l - lane));
        }
        return best;
    }

    void fillAdjacent(const VehicleState& v, int lane, bool mandatory, AdjacentLane& out) const {
        out = AdjacentLane{};
        if (lane < 1 || lane > cfg_.layout.laneCount) return;
        if (mandatory) {
            // Only directions that move toward an open lane qualify.
            if (distToOpen(lane) >= distToOpen(v.lane)) return;
        } else {
            if (isClosedLane(lane)) return;
        }
        out.available = true;
        const auto [leader, lGap] = leaderIn(lane, v);
        if (leader) out.leader = Neighbor{leader->speed, lGap};
        const auto [follower, fGap] = followerIn(lane, v);
        if (follower) out.follower = Neighbor{follower->speed, fGap};
        out.projectedSpeed = projectedSpeedInLane(v, lane, leader, lGap);
    }

    double projectedSpeedInLane(const VehicleState& v, int lane, const VehicleState* leader,
                                double gap) const {
        double proj = std::min(cfg_.layout.speedLimitAt(v.position), v.cls.maxSpeed);
        if (leader) proj = std::min(proj, krauss_safe_speed(leader->speed, gap, v.driver.decel, v.driver.tau));
        if (isClosedLane(lane) && v.position <= cfg_.layout.taperStart()) {
            const double barrierGap = cfg_.layout.taperStart() - v.position;
            proj = std::min(proj, krauss_safe_speed(0.0, barrierGap, v.driver.decel, v.driver.tau));
        }
        return proj;
    }

    std::uint64_t queuedCount() const {
        std::uint64_t n = 0;
        for (const auto& q : laneQueues_) n += q.size();
        return n;
    }

    static constexpr double kLaneChangeHold = 2.0;  // s

    ScenarioConfig cfg_;
    EngineOptions opts_;
    Rng rng_;
    double dt_ = 0.1;
    long long stepIndex_ = 0;
    long long warmupSteps_ = 0;
    long long totalSteps_ = 0;
    int nextId_ = 1;

    std::vector<Arrival> schedule_;
    size_t nextArrival_ = 0;
    std::vector<std::deque<QueuedArrival>> laneQueues_;

    std::vector<VehicleState> fleet_;
    std::vector<std::vector<int>> laneLists_;  // per lane, sorted by position
    std::vector<int> order_;
    std::vector<int> byId_;
    std::vector<double> newSpeed_;

    std::vector<TocEvent> pendingEvents_;
    std::vector<TocEvent> recordedToc_;
    std::set<int> recordedTocVehicles_;

    TrajectoryConsumer* consumer_ = nullptr;
    SimSummary counters_;
    double speedSum_ = 0.0;
};

/// Collected outputs of one trial, for callers that want everything in
/// memory. Large trials should stream through a TrajectoryConsumer instead.
struct SimOutputs {
    std::vector<TrajectorySample> trajectories;
    std::vector<TocEvent> tocEvents;
    SimSummary summary;
};

class CollectingConsumer : public TrajectoryConsumer {
public:
    void onSample(const TrajectorySample& s) override { samples.push_back(s); }
    std::vector<TrajectorySample> samples;
};

inline SimOutputs run(const ValidatedScenario& scenario) {
    Simulation sim(scenario);
    CollectingConsumer collector;
    sim.setTrajectoryConsumer(&collector);
    sim.run();
    return SimOutputs{std::move(collector.samples), sim.tocEvents(), sim.summary()};
}

}  // namespace wzsim
