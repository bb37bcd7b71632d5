#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "wzsim/engine.hpp"
#include "wzsim/types.hpp"

namespace wzsim {

/// Time to collision for a follower/leader pair: gap over closing speed.
/// Absent when the gap is opening or constant.
inline std::optional<double> compute_ttc(double gap, double followerSpeed, double leaderSpeed) {
    if (followerSpeed <= leaderSpeed) return std::nullopt;
    return gap / (followerSpeed - leaderSpeed);
}

enum class ConflictKind { SingleVehicle, RearEnd, LaneChange };

inline const char* to_string(ConflictKind k) {
    switch (k) {
        case ConflictKind::SingleVehicle: return "singleVehicle";
        case ConflictKind::RearEnd: return "rearEnd";
        case ConflictKind::LaneChange: return "laneChange";
    }
    return "rearEnd";
}

struct ConflictEvent {
    ConflictKind kind = ConflictKind::RearEnd;
    double time = 0.0;  // episode start
    int primaryVehicle = 0;
    std::optional<int> secondaryVehicle;  // leader of the pair; absent for single-vehicle
    std::optional<double> minTtc;         // s
    double maxDecel = 0.0;                // m/s^2, magnitude
    double position = 0.0;                // m, primary vehicle at episode start
    int lane = 1;
};

struct SafetyParams {
    double ttcThreshold = 1.5;            // s, opens a pair episode
    double episodeCloseHold = 5.0;        // s of recovered TTC that closes it
    double laneChangeWindow = 2.0;        // s around episode start
    double emergencyDecel = 9.0;          // m/s^2
    double emergencyBrakeFraction = 0.75; // of emergencyDecel
    double minBrakeDuration = 0.5;        // s
    double eventCooldown = 10.0;          // s between single-vehicle events per vehicle
    double smallLength = 5.0;             // m
    double largeLength = 12.0;            // m

    double vehicleLength(VehicleKind k) const {
        return k == VehicleKind::Small ? smallLength : largeLength;
    }
    double brakeThreshold() const { return emergencyBrakeFraction * emergencyDecel; }
};

namespace detail {

struct PairEpisodeRecord {
    int follower = 0;
    int leader = 0;
    double open = 0.0;
    double close = 0.0;
};

// Shared step-buffering base: samples must arrive grouped by time with
// non-decreasing timestamps (the trajectory log order).
class StepBuffered {
public:
    void push(const TrajectorySample& s) {
        if (!buffer_.empty() && s.time > buffer_.front().time) {
            flushStep();
        }
        buffer_.push_back(s);
    }

protected:
    virtual void processStep(const std::vector<TrajectorySample>& step) = 0;

    void flushStep() {
        if (buffer_.empty()) return;
        processStep(buffer_);
        buffer_.clear();
    }

private:
    std::vector<TrajectorySample> buffer_;
};

// Nearest same-lane leader for every sample of one step.
inline std::vector<int> leader_index(const std::vector<TrajectorySample>& step) {
    std::vector<int> order(step.size());
    for (size_t i = 0; i < step.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&step](int a, int b) {
        const auto& sa = step[static_cast<size_t>(a)];
        const auto& sb = step[static_cast<size_t>(b)];
        if (sa.lane != sb.lane) return sa.lane < sb.lane;
        if (sa.position != sb.position) return sa.position < sb.position;
        return sa.vehicleId < sb.vehicleId;
    });
    std::vector<int> leaders(step.size(), -1);
    for (size_t k = 0; k + 1 < order.size(); ++k) {
        const auto& me = step[static_cast<size_t>(order[k])];
        const auto& next = step[static_cast<size_t>(order[k + 1])];
        if (me.lane == next.lane) leaders[static_cast<size_t>(order[k])] = order[k + 1];
    }
    return leaders;
}

}  // namespace detail

/// Streaming pair-conflict scanner. An episode opens for a same-lane
/// follower/leader pair when TTC drops below the threshold, and closes
/// after the TTC has stayed at or above it (or the pair has separated) for
/// episodeCloseHold seconds. One event per episode; classified as a
/// lane-change conflict when either party moved lanes near the episode
/// start, rear-end otherwise.
class PairConflictScanner : public detail::StepBuffered {
public:
    explicit PairConflictScanner(const SafetyParams& p) : p_(p) {}

    std::vector<ConflictEvent> finish() {
        flushStep();
        for (auto& [key, ep] : episodes_) emit(key.first, key.second, ep, lastTime_);
        episodes_.clear();
        std::sort(events_.begin(), events_.end(), [](const ConflictEvent& a, const ConflictEvent& b) {
            if (a.time != b.time) return a.time < b.time;
            if (a.primaryVehicle != b.primaryVehicle) return a.primaryVehicle < b.primaryVehicle;
            return a.secondaryVehicle.value_or(-1) < b.secondaryVehicle.value_or(-1);
        });
        return std::move(events_);
    }

    // Episode spans including close times; used for attribution checks.
    const std::vector<detail::PairEpisodeRecord>& episodeRecords() const { return records_; }

protected:
    void processStep(const std::vector<TrajectorySample>& step) override {
        const double t = step.front().time;
        lastTime_ = t;
        const auto leaders = detail::leader_index(step);

        for (size_t i = 0; i < step.size(); ++i) {
            const auto& s = step[i];
            auto it = lastLane_.find(s.vehicleId);
            if (it != lastLane_.end() && it->second != s.lane) moveTimes_[s.vehicleId].push_back(t);
            lastLane_[s.vehicleId] = s.lane;
        }

        hot_.clear();
        for (size_t i = 0; i < step.size(); ++i) {
            if (leaders[i] < 0) continue;
            const auto& f = step[i];
            const auto& l = step[static_cast<size_t>(leaders[i])];
            const double gap = std::max(0.0, l.position - p_.vehicleLength(l.vehicleClass) - f.position);
            const auto ttc = compute_ttc(gap, f.speed, l.speed);
            if (!ttc || *ttc >= p_.ttcThreshold) continue;
            const auto key = std::make_pair(f.vehicleId, l.vehicleId);
            hot_.insert(key);
            auto [ep, inserted] = episodes_.try_emplace(key);
            Episode& e = ep->second;
            if (inserted) {
                e.open = t;
                e.minTtc = *ttc;
                e.position = f.position;
                e.lane = f.lane;
            }
            e.minTtc = std::min(e.minTtc, *ttc);
            e.maxDecel = std::max(e.maxDecel, -std::min(0.0, f.accel));
            e.closing = false;
        }
        // Cool non-hot episodes; close the ones that stayed cool long enough.
        for (auto it = episodes_.begin(); it != episodes_.end();) {
            if (hot_.count(it->first)) {
                ++it;
                continue;
            }
            Episode& e = it->second;
            if (!e.closing) {
                e.closing = true;
                e.closingSince = t;
            }
            if (t - e.closingSince >= p_.episodeCloseHold) {
                emit(it->first.first, it->first.second, e, t);
                it = episodes_.erase(it);
            } else {
                ++it;
            }
        }
    }

private:
    struct Episode {
        double open = 0.0;
        double minTtc = std::numeric_limits<double>::infinity();
        double maxDecel = 0.0;
        double position = 0.0;
        int lane = 1;
        bool closing = false;
        double closingSince = 0.0;
    };

    void emit(int follower, int leader, const Episode& e, double closeTime) {
        ConflictEvent ev;
        ev.time = e.open;
        ev.primaryVehicle = follower;
        ev.secondaryVehicle = leader;
        ev.minTtc = e.minTtc;
        ev.maxDecel = e.maxDecel;
        ev.position = e.position;
        ev.lane = e.lane;
        ev.kind = movedNear(follower, e.open) || movedNear(leader, e.open)
                      ? ConflictKind::LaneChange
                      : ConflictKind::RearEnd;
        events_.push_back(ev);
        records_.push_back({follower, leader, e.open, closeTime});
    }

    bool movedNear(int vehicle, double when) const {
        auto it = moveTimes_.find(vehicle);
        if (it == moveTimes_.end()) return false;
        for (double t : it->second) {
            if (std::abs(t - when) <= p_.laneChangeWindow) return true;
        }
        return false;
    }

    SafetyParams p_;
    std::map<std::pair<int, int>, Episode> episodes_;
    std::set<std::pair<int, int>> hot_;
    std::unordered_map<int, int> lastLane_;
    std::unordered_map<int, std::vector<double>> moveTimes_;
    std::vector<ConflictEvent> events_;
    std::vector<detail::PairEpisodeRecord> records_;
    double lastTime_ = 0.0;
};

/// Streaming single-vehicle conflict scanner: boundary contact with the
/// closed area past the taper, and sustained evasive braking with no
/// leader to attribute it to. Braking events still need the pair-episode
/// suppression pass (see detect_single_vehicle_conflicts).
class SingleVehicleScanner : public detail::StepBuffered {
public:
    SingleVehicleScanner(const SafetyParams& p, const WorkZoneLayout& layout)
        : p_(p), layout_(layout) {}

    struct BrakeCandidate {
        ConflictEvent event;
        double brakeEnd = 0.0;
    };

    // Boundary events are final; braking candidates carry their episode
    // span so the caller can drop the ones overlapping a pair episode.
    std::pair<std::vector<ConflictEvent>, std::vector<BrakeCandidate>> finish() {
        flushStep();
        for (auto& [id, b] : braking_) {
            if (b.active) closeBrake(id, b, lastTime_);
        }
        braking_.clear();
        return {std::move(boundaryEvents_), std::move(brakeCandidates_)};
    }

protected:
    void processStep(const std::vector<TrajectorySample>& step) override {
        const double t = step.front().time;
        lastTime_ = t;
        const auto leaders = detail::leader_index(step);
        const double brakeThresh = p_.brakeThreshold();

        for (size_t i = 0; i < step.size(); ++i) {
            const auto& s = step[i];
            // (a) entry into the closed area beyond the taper
            const bool inArea = layout_.isClosed(s.lane) && s.position > layout_.taperStart();
            bool& wasInArea = inClosedArea_[s.vehicleId];
            if (inArea && !wasInArea) {
                ConflictEvent ev;
                ev.kind = ConflictKind::SingleVehicle;
                ev.time = t;
                ev.primaryVehicle = s.vehicleId;
                ev.maxDecel = std::max(0.0, -s.accel);
                ev.position = s.position;
                ev.lane = s.lane;
                if (allowEvent(s.vehicleId, t)) boundaryEvents_.push_back(ev);
            }
            wasInArea = inArea;

            // (b) sustained hard braking
            Brake& b = braking_[s.vehicleId];
            if (s.accel <= -brakeThresh) {
                if (!b.active) {
                    b.active = true;
                    b.start = t;
                    b.maxDecel = -s.accel;
                    b.position = s.position;
                    b.lane = s.lane;
                    b.attributable = false;
                    if (leaders[i] >= 0) {
                        const auto& l = step[static_cast<size_t>(leaders[i])];
                        const double gap =
                            std::max(0.0, l.position - p_.vehicleLength(l.vehicleClass) - s.position);
                        const auto ttc = compute_ttc(gap, s.speed, l.speed);
                        if (ttc && *ttc < 2.0 * p_.ttcThreshold) b.attributable = true;
                    }
                } else {
                    b.maxDecel = std::max(b.maxDecel, -s.accel);
                }
                b.last = t;
            } else if (b.active) {
                closeBrake(s.vehicleId, b, t);
            }
        }
    }

private:
    struct Brake {
        bool active = false;
        bool attributable = false;
        double start = 0.0;
        double last = 0.0;
        double maxDecel = 0.0;
        double position = 0.0;
        int lane = 1;
    };

    void closeBrake(int id, Brake& b, double end) {
        if (!b.attributable && b.last - b.start >= p_.minBrakeDuration - 1e-9 && allowEvent(id, b.start)) {
            ConflictEvent ev;
            ev.kind = ConflictKind::SingleVehicle;
            ev.time = b.start;
            ev.primaryVehicle = id;
            ev.maxDecel = b.maxDecel;
            ev.position = b.position;
            ev.lane = b.lane;
            brakeCandidates_.push_back({ev, end});
        }
        b.active = false;
    }

    bool allowEvent(int vehicle, double t) {
        auto it = lastEvent_.find(vehicle);
        if (it != lastEvent_.end() && t - it->second < p_.eventCooldown) return false;
        lastEvent_[vehicle] = t;
        return true;
    }

    SafetyParams p_;
    WorkZoneLayout layout_;
    std::unordered_map<int, bool> inClosedArea_;
    std::unordered_map<int, Brake> braking_;
    std::unordered_map<int, double> lastEvent_;
    std::vector<ConflictEvent> boundaryEvents_;
    std::vector<BrakeCandidate> brakeCandidates_;
    double lastTime_ = 0.0;
};

namespace detail {

inline bool overlaps_pair_episode(const ConflictEvent& ev, double brakeEnd,
                                  const std::vector<PairEpisodeRecord>& records) {
    for (const auto& r : records) {
        if (r.follower != ev.primaryVehicle && r.leader != ev.primaryVehicle) continue;
        if (ev.time <= r.close && brakeEnd >= r.open) return true;
    }
    return false;
}

inline std::vector<ConflictEvent> merge_single_events(
    std::vector<ConflictEvent> boundary, const std::vector<SingleVehicleScanner::BrakeCandidate>& brakes,
    const std::vector<PairEpisodeRecord>& pairRecords) {
    for (const auto& c : brakes) {
        if (!overlaps_pair_episode(c.event, c.brakeEnd, pairRecords)) boundary.push_back(c.event);
    }
    std::sort(boundary.begin(), boundary.end(), [](const ConflictEvent& a, const ConflictEvent& b) {
        if (a.time != b.time) return a.time < b.time;
        return a.primaryVehicle < b.primaryVehicle;
    });
    return boundary;
}

}  // namespace detail

/// Combined streaming detector covering all conflict types of one trial.
class ConflictDetector : public TrajectoryConsumer {
public:
    ConflictDetector(const SafetyParams& p, const WorkZoneLayout& layout)
        : pairs_(p), singles_(p, layout) {}

    void onSample(const TrajectorySample& s) override {
        pairs_.push(s);
        singles_.push(s);
    }

    std::vector<ConflictEvent> finish() {
        auto events = pairs_.finish();
        auto [boundary, brakes] = singles_.finish();
        auto singles = detail::merge_single_events(std::move(boundary), brakes, pairs_.episodeRecords());
        events.insert(events.end(), singles.begin(), singles.end());
        std::sort(events.begin(), events.end(), [](const ConflictEvent& a, const ConflictEvent& b) {
            if (a.time != b.time) return a.time < b.time;
            if (a.primaryVehicle != b.primaryVehicle) return a.primaryVehicle < b.primaryVehicle;
            return a.secondaryVehicle.value_or(-1) < b.secondaryVehicle.value_or(-1);
        });
        return events;
    }

private:
    PairConflictScanner pairs_;
    SingleVehicleScanner singles_;
};

/// Pair (rear-end and lane-change) conflicts of a time-sorted trajectory log.
inline std::vector<ConflictEvent> detect_vehicle_conflicts(const std::vector<TrajectorySample>& log,
                                                           double ttcThreshold,
                                                           SafetyParams params = {}) {
    params.ttcThreshold = ttcThreshold;
    PairConflictScanner scanner(params);
    for (const auto& s : log) scanner.push(s);
    return scanner.finish();
}

/// Single-vehicle conflicts of a time-sorted trajectory log: closed-area
/// entries past the taper, and unattributable sustained hard braking.
/// Braking episodes that overlap a pair episode of the same vehicle are
/// attributed to the pair and dropped here.
inline std::vector<ConflictEvent> detect_single_vehicle_conflicts(
    const std::vector<TrajectorySample>& log, const WorkZoneLayout& layout,
    double emergencyBrakeFraction, SafetyParams params = {}) {
    params.emergencyBrakeFraction = emergencyBrakeFraction;
    PairConflictScanner pairs(params);
    SingleVehicleScanner singles(params, layout);
    for (const auto& s : log) {
        pairs.push(s);
        singles.push(s);
    }
    pairs.finish();
    auto [boundary, brakes] = singles.finish();
    return detail::merge_single_events(std::move(boundary), brakes, pairs.episodeRecords());
}

/// Per-trial indicator set.
struct IndicatorTable {
    std::uint64_t singleVehicleConflicts = 0;
    std::uint64_t multiVehicleConflicts = 0;
    std::uint64_t totalConflicts = 0;
    std::uint64_t disengagementsSV = 0;
    std::uint64_t disengagementsLV = 0;
    std::uint64_t disengagementsTotal = 0;
    std::uint64_t mrmSV = 0;
    std::uint64_t mrmLV = 0;
    std::uint64_t mrmTotal = 0;
};

inline IndicatorTable aggregate_indicators(const std::vector<ConflictEvent>& conflicts,
                                           const std::vector<TocEvent>& tocEvents) {
    IndicatorTable t;
    for (const auto& c : conflicts) {
        if (c.kind == ConflictKind::SingleVehicle) ++t.singleVehicleConflicts;
        else ++t.multiVehicleConflicts;
    }
    t.totalConflicts = t.singleVehicleConflicts + t.multiVehicleConflicts;
    for (const auto& e : tocEvents) {
        const bool small = e.vehicleClass == VehicleKind::Small;
        if (e.kind == TocEventKind::TorIssued) {
            ++(small ? t.disengagementsSV : t.disengagementsLV);
        } else if (e.kind == TocEventKind::MrmStarted) {
            ++(small ? t.mrmSV : t.mrmLV);
        }
    }
    t.disengagementsTotal = t.disengagementsSV + t.disengagementsLV;
    t.mrmTotal = t.mrmSV + t.mrmLV;
    return t;
}

}  // namespace wzsim
