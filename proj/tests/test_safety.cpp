#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <map>
#include <set>

#include "wzsim/csv.hpp"
#include "wzsim/random.hpp"
#include "wzsim/safety.hpp"

using namespace wzsim;

// ---------------------------------------------------------------------------
// Brute-force reference: per-step scan over every ordered vehicle pair with
// explicit episode bookkeeping, no incremental state. Deliberately naive.

namespace oracle {

struct PairEvent {
    int follower = 0;
    int leader = 0;
    double open = 0.0;
    double close = 0.0;
    double minTtc = 0.0;
    double position = 0.0;
    int lane = 0;
    bool laneChangeKind = false;
};

struct Log {
    std::vector<double> times;                               // sorted unique
    std::map<double, std::vector<TrajectorySample>> byTime;  // samples per step
    std::vector<int> ids;
    std::map<int, std::vector<double>> moves;  // lane-move times per vehicle
};

inline Log index_log(const std::vector<TrajectorySample>& log) {
    Log out;
    std::set<double> times;
    std::set<int> ids;
    for (const auto& s : log) {
        times.insert(s.time);
        ids.insert(s.vehicleId);
        out.byTime[s.time].push_back(s);
    }
    out.times.assign(times.begin(), times.end());
    out.ids.assign(ids.begin(), ids.end());
    for (int id : ids) {
        std::vector<TrajectorySample> mine;
        for (const auto& s : log) {
            if (s.vehicleId == id) mine.push_back(s);
        }
        std::sort(mine.begin(), mine.end(),
                  [](const TrajectorySample& a, const TrajectorySample& b) { return a.time < b.time; });
        for (size_t i = 1; i < mine.size(); ++i) {
            if (mine[i].lane != mine[i - 1].lane) out.moves[id].push_back(mine[i].time);
        }
    }
    return out;
}

// True when l is f's nearest same-lane leader in this step, ordering ties
// by vehicle id.
inline bool is_adjacent(const std::vector<TrajectorySample>& step, const TrajectorySample& f,
                        const TrajectorySample& l) {
    if (f.lane != l.lane) return false;
    auto ahead = [](const TrajectorySample& a, const TrajectorySample& b) {
        return b.position > a.position || (b.position == a.position && b.vehicleId > a.vehicleId);
    };
    if (!ahead(f, l)) return false;
    for (const auto& c : step) {
        if (c.vehicleId == f.vehicleId || c.vehicleId == l.vehicleId || c.lane != f.lane) continue;
        if (ahead(f, c) && ahead(c, l)) return false;
    }
    return true;
}

inline std::vector<PairEvent> pair_events(const std::vector<TrajectorySample>& log,
                                          const SafetyParams& p) {
    const Log idx = index_log(log);
    std::vector<PairEvent> events;

    for (int f : idx.ids) {
        for (int l : idx.ids) {
            if (f == l) continue;
            bool open = false;
            PairEvent ev;
            double lastHot = 0.0;
            bool sawHot = false;
            for (double t : idx.times) {
                const auto& step = idx.byTime.at(t);
                const TrajectorySample* sf = nullptr;
                const TrajectorySample* sl = nullptr;
                for (const auto& s : step) {
                    if (s.vehicleId == f) sf = &s;
                    if (s.vehicleId == l) sl = &s;
                }
                bool hot = false;
                double ttc = 0.0;
                if (sf && sl && is_adjacent(step, *sf, *sl)) {
                    const double gap =
                        std::max(0.0, sl->position - p.vehicleLength(sl->vehicleClass) - sf->position);
                    if (sf->speed > sl->speed) {
                        ttc = gap / (sf->speed - sl->speed);
                        hot = ttc < p.ttcThreshold;
                    }
                }
                if (hot) {
                    if (!open) {
                        open = true;
                        ev = PairEvent{};
                        ev.follower = f;
                        ev.leader = l;
                        ev.open = t;
                        ev.minTtc = ttc;
                        ev.position = sf->position;
                        ev.lane = sf->lane;
                    }
                    ev.minTtc = std::min(ev.minTtc, ttc);
                    lastHot = t;
                    sawHot = true;
                } else if (open) {
                    // closingSince is the first cool step after the last hot one.
                    double closingSince = 0.0;
                    bool found = false;
                    for (double u : idx.times) {
                        if (u > lastHot) {
                            closingSince = u;
                            found = true;
                            break;
                        }
                    }
                    if (found && t - closingSince >= p.episodeCloseHold) {
                        ev.close = t;
                        events.push_back(ev);
                        open = false;
                    }
                }
                (void)sawHot;
            }
            if (open) {
                ev.close = idx.times.empty() ? 0.0 : idx.times.back();
                events.push_back(ev);
            }
        }
    }

    for (auto& ev : events) {
        auto movedNear = [&idx, &p](int vehicle, double when) {
            auto it = idx.moves.find(vehicle);
            if (it == idx.moves.end()) return false;
            for (double t : it->second) {
                if (std::abs(t - when) <= p.laneChangeWindow) return true;
            }
            return false;
        };
        ev.laneChangeKind = movedNear(ev.follower, ev.open) || movedNear(ev.leader, ev.open);
    }

    std::sort(events.begin(), events.end(), [](const PairEvent& a, const PairEvent& b) {
        if (a.open != b.open) return a.open < b.open;
        if (a.follower != b.follower) return a.follower < b.follower;
        return a.leader < b.leader;
    });
    return events;
}

}  // namespace oracle

// ---------------------------------------------------------------------------

namespace {

// One vehicle's scripted motion; samples are emitted step by step.
struct Script {
    int id;
    VehicleKind cls = VehicleKind::Small;
    int lane;
    double pos;
    double speed;
    std::vector<std::pair<int, double>> phases;  // (steps, accel)
    std::vector<std::pair<int, int>> laneMoves;  // (step index, new lane)
};

std::vector<TrajectorySample> build_log(std::vector<Script> scripts, int steps, double dt = 0.1) {
    std::vector<TrajectorySample> log;
    for (int k = 0; k < steps; ++k) {
        const double t = (k + 1) * dt;
        for (auto& s : scripts) {
            double accel = 0.0;
            int acc = 0;
            for (const auto& [n, a] : s.phases) {
                acc += n;
                if (k < acc) {
                    accel = a;
                    break;
                }
            }
            for (const auto& [at, lane] : s.laneMoves) {
                if (k == at) s.lane = lane;
            }
            const double v0 = s.speed;
            s.speed = std::max(0.0, s.speed + accel * dt);
            s.pos += s.speed * dt;
            TrajectorySample sample;
            sample.time = t;
            sample.vehicleId = s.id;
            sample.vehicleClass = s.cls;
            sample.lane = s.lane;
            sample.position = s.pos;
            sample.speed = s.speed;
            sample.accel = (s.speed - v0) / dt;
            sample.mode = DriveMode::Manual;
            log.push_back(sample);
        }
    }
    return log;
}

std::vector<TrajectorySample> random_log(Rng& rng) {
    const int n = 2 + static_cast<int>(rng.uniform01() * 4.0);  // 2..5 vehicles
    const int steps = 40 + static_cast<int>(rng.uniform01() * 160.0);
    std::vector<Script> scripts;
    for (int i = 0; i < n; ++i) {
        Script s;
        s.id = i + 1;
        s.cls = rng.bernoulli(0.2) ? VehicleKind::Large : VehicleKind::Small;
        s.lane = rng.bernoulli(0.7) ? 1 : 2;
        s.pos = 20.0 * i + rng.uniform(0.0, 10.0);
        s.speed = rng.uniform(0.0, 25.0);
        int remaining = steps;
        while (remaining > 0) {
            const int span = std::min(remaining, 5 + static_cast<int>(rng.uniform01() * 40.0));
            s.phases.push_back({span, rng.uniform(-8.0, 3.0)});
            remaining -= span;
        }
        if (rng.bernoulli(0.4)) {
            s.laneMoves.push_back({static_cast<int>(rng.uniform01() * steps), rng.bernoulli(0.5) ? 1 : 2});
        }
        scripts.push_back(s);
    }
    return build_log(scripts, steps);
}

void compare_with_oracle(const std::vector<TrajectorySample>& log, const SafetyParams& p) {
    const auto got = detect_vehicle_conflicts(log, p.ttcThreshold, p);
    const auto expected = oracle::pair_events(log, p);
    REQUIRE(got.size() == expected.size());
    for (size_t i = 0; i < got.size(); ++i) {
        INFO("event " << i);
        CHECK(got[i].time == expected[i].open);
        CHECK(got[i].primaryVehicle == expected[i].follower);
        REQUIRE(got[i].secondaryVehicle.has_value());
        CHECK(*got[i].secondaryVehicle == expected[i].leader);
        REQUIRE(got[i].minTtc.has_value());
        CHECK(*got[i].minTtc == Catch::Approx(expected[i].minTtc).margin(1e-12));
        CHECK(got[i].lane == expected[i].lane);
        CHECK(got[i].position == Catch::Approx(expected[i].position).margin(1e-12));
        CHECK(got[i].kind ==
              (expected[i].laneChangeKind ? ConflictKind::LaneChange : ConflictKind::RearEnd));
        CHECK(*got[i].minTtc <= p.ttcThreshold);
    }
}

}  // namespace

TEST_CASE("ttc definition") {
    REQUIRE(compute_ttc(30.0, 20.0, 10.0).has_value());
    CHECK(*compute_ttc(30.0, 20.0, 10.0) == Catch::Approx(3.0));
    CHECK_FALSE(compute_ttc(30.0, 10.0, 20.0).has_value());
    CHECK_FALSE(compute_ttc(30.0, 10.0, 10.0).has_value());
    REQUIRE(compute_ttc(0.0, 20.0, 10.0).has_value());
    CHECK(*compute_ttc(0.0, 20.0, 10.0) == 0.0);
}

TEST_CASE("constant equal speeds never conflict") {
    Script leader{1, VehicleKind::Small, 1, 40.0, 15.0, {{100, 0.0}}, {}};
    Script follower{2, VehicleKind::Small, 1, 20.0, 15.0, {{100, 0.0}}, {}};
    const auto log = build_log({leader, follower}, 100);
    CHECK(detect_vehicle_conflicts(log, 1.5).empty());
}

TEST_CASE("a closing follower that recovers produces one rear-end episode") {
    // Leader steady at 10 m/s; follower closes at 15 m/s from a 15 m gap
    // (TTC 3 s), brakes at 5 m/s^2 back to 10 m/s, then follows.
    Script leader{1, VehicleKind::Small, 1, 50.0, 10.0, {{150, 0.0}}, {}};
    Script follower{2, VehicleKind::Small, 1, 30.0, 15.0, {{20, 0.0}, {10, -5.0}, {120, 0.0}}, {}};
    const auto log = build_log({leader, follower}, 150);
    const auto events = detect_vehicle_conflicts(log, 1.5);
    REQUIRE(events.size() == 1);
    CHECK(events[0].kind == ConflictKind::RearEnd);
    CHECK(events[0].primaryVehicle == 2);
    CHECK(*events[0].secondaryVehicle == 1);
    CHECK(*events[0].minTtc <= 1.5);
    compare_with_oracle(log, SafetyParams{});
}

TEST_CASE("three vehicles pairwise in conflict count as two pair episodes") {
    Script a{1, VehicleKind::Small, 1, 80.0, 8.0, {{80, 0.0}}, {}};
    Script b{2, VehicleKind::Small, 1, 60.0, 12.0, {{30, 0.0}, {50, -2.0}}, {}};
    Script c{3, VehicleKind::Small, 1, 40.0, 16.0, {{30, 0.0}, {50, -3.0}}, {}};
    const auto log = build_log({a, b, c}, 80);
    const auto events = detect_vehicle_conflicts(log, 1.5);
    REQUIRE(events.size() == 2);
    const auto table = aggregate_indicators(events, {});
    CHECK(table.multiVehicleConflicts == 2);
    CHECK(table.singleVehicleConflicts == 0);
    compare_with_oracle(log, SafetyParams{});
}

TEST_CASE("a lane change near the episode start flips the kind") {
    // Vehicle 2 cuts in ahead of the faster vehicle 1; the TTC drops below
    // the threshold about 1.3 s after the move.
    Script target{1, VehicleKind::Small, 1, 40.0, 20.0, {{100, 0.0}}, {}};
    Script cutter{2, VehicleKind::Small, 2, 92.0, 12.0, {{100, 0.0}}, {{30, 1}}};
    const auto log = build_log({target, cutter}, 100);
    const auto events = detect_vehicle_conflicts(log, 1.5);
    REQUIRE(!events.empty());
    CHECK(events[0].kind == ConflictKind::LaneChange);
    compare_with_oracle(log, SafetyParams{});
}

TEST_CASE("crossing the taper in a closed lane is a single-vehicle conflict") {
    WorkZoneLayout layout;  // taper at 3000, lanes 1-2 closed
    Script runaway{1, VehicleKind::Small, 1, 2980.0, 10.0, {{100, 0.0}}, {}};
    const auto log = build_log({runaway}, 100);
    const auto events = detect_single_vehicle_conflicts(log, layout, 0.75);
    REQUIRE(events.size() == 1);
    CHECK(events[0].kind == ConflictKind::SingleVehicle);
    CHECK(events[0].primaryVehicle == 1);
    CHECK(events[0].position > 3000.0);
    CHECK_FALSE(events[0].secondaryVehicle.has_value());
}

TEST_CASE("the same vehicle in an open lane is not flagged") {
    WorkZoneLayout layout;
    Script through{1, VehicleKind::Small, 3, 2980.0, 10.0, {{100, 0.0}}, {}};
    const auto log = build_log({through}, 100);
    CHECK(detect_single_vehicle_conflicts(log, layout, 0.75).empty());
}

TEST_CASE("sustained hard braking on an empty road is a single-vehicle conflict") {
    WorkZoneLayout layout;
    Script braker{1, VehicleKind::Small, 3, 100.0, 20.0, {{20, 0.0}, {10, -8.0}, {70, 0.0}}, {}};
    const auto log = build_log({braker}, 100);
    const auto events = detect_single_vehicle_conflicts(log, layout, 0.75);
    REQUIRE(events.size() == 1);
    CHECK(events[0].kind == ConflictKind::SingleVehicle);
    CHECK(events[0].maxDecel == Catch::Approx(8.0).margin(1e-9));
}

TEST_CASE("short hard braking does not qualify") {
    WorkZoneLayout layout;
    Script braker{1, VehicleKind::Small, 3, 100.0, 20.0, {{20, 0.0}, {3, -8.0}, {70, 0.0}}, {}};
    const auto log = build_log({braker}, 93);
    CHECK(detect_single_vehicle_conflicts(log, layout, 0.75).empty());
}

TEST_CASE("hard braking behind a close leader is attributed to the pair") {
    WorkZoneLayout layout;
    // Leader 18 m ahead at 10 m/s, follower at 20 m/s: TTC ~1.3 s at the
    // brake start, so the braking belongs to the pair conflict.
    Script leader{1, VehicleKind::Small, 3, 120.0, 10.0, {{100, 0.0}}, {}};
    Script follower{2, VehicleKind::Small, 3, 102.0, 20.0, {{5, 0.0}, {10, -8.0}, {85, 0.0}}, {}};
    const auto log = build_log({leader, follower}, 100);
    const auto singles = detect_single_vehicle_conflicts(log, layout, 0.75);
    CHECK(singles.empty());
    const auto pairs = detect_vehicle_conflicts(log, 1.5);
    CHECK(!pairs.empty());
}

TEST_CASE("composed fixtures add up in the indicator table") {
    WorkZoneLayout layout;
    std::vector<TrajectorySample> combined;
    double offset = 0.0;
    int idBase = 0;
    auto append = [&](std::vector<Script> scripts, int steps) {
        for (auto& s : scripts) s.id += idBase;
        auto log = build_log(std::move(scripts), steps);
        for (auto& s : log) s.time += offset;
        combined.insert(combined.end(), log.begin(), log.end());
        offset += (steps + 1) * 0.1;
        idBase += 10;
    };
    // One rear-end pair episode, one taper crossing, one braking event.
    append({Script{1, VehicleKind::Small, 1, 50.0, 10.0, {{150, 0.0}}, {}},
            Script{2, VehicleKind::Small, 1, 30.0, 15.0, {{20, 0.0}, {10, -5.0}, {120, 0.0}}, {}},
            Script{3, VehicleKind::Small, 1, 2980.0, 10.0, {{150, 0.0}}, {}}},
           150);
    append({Script{1, VehicleKind::Small, 3, 100.0, 20.0, {{20, 0.0}, {10, -8.0}, {70, 0.0}}, {}}},
           100);

    SafetyParams p;
    auto events = detect_vehicle_conflicts(combined, p.ttcThreshold, p);
    const auto singles = detect_single_vehicle_conflicts(combined, layout, 0.75, p);
    events.insert(events.end(), singles.begin(), singles.end());
    const auto table = aggregate_indicators(events, {});
    CHECK(table.multiVehicleConflicts == 1);
    CHECK(table.singleVehicleConflicts == 2);
    CHECK(table.totalConflicts == 3);
}

TEST_CASE("episode extraction matches the brute-force scan on random logs") {
    Rng rng(4242);
    for (int i = 0; i < 60; ++i) {
        INFO("random log " << i);
        compare_with_oracle(random_log(rng), SafetyParams{});
    }
}

TEST_CASE("no braking episode is double counted as single and pair") {
    Rng rng(777);
    SafetyParams p;
    WorkZoneLayout layout;
    for (int i = 0; i < 40; ++i) {
        const auto log = random_log(rng);
        const auto singles = detect_single_vehicle_conflicts(log, layout, 0.75, p);
        const auto pairEpisodes = oracle::pair_events(log, p);
        for (const auto& ev : singles) {
            if (ev.position > layout.taperStart()) continue;  // boundary contact, not braking
            // Recover the braking interval around the event start.
            double end = ev.time;
            std::map<double, double> accelByTime;
            for (const auto& s : log) {
                if (s.vehicleId == ev.primaryVehicle) accelByTime[s.time] = s.accel;
            }
            for (auto it = accelByTime.find(ev.time); it != accelByTime.end(); ++it) {
                if (it->second <= -p.brakeThreshold()) end = it->first;
                else break;
            }
            for (const auto& pe : pairEpisodes) {
                if (pe.follower != ev.primaryVehicle && pe.leader != ev.primaryVehicle) continue;
                INFO("single at " << ev.time << " vs pair [" << pe.open << ", " << pe.close << "]");
                CHECK((end < pe.open || ev.time > pe.close));
            }
        }
    }
}

TEST_CASE("conflicting pair set grows with the ttc threshold") {
    Rng rng(99);
    for (int i = 0; i < 30; ++i) {
        const auto log = random_log(rng);
        auto pairsAt = [&log](double threshold) {
            std::set<std::pair<int, int>> keys;
            for (const auto& e : detect_vehicle_conflicts(log, threshold)) {
                keys.insert({e.primaryVehicle, *e.secondaryVehicle});
            }
            return keys;
        };
        const auto lo = pairsAt(1.0);
        const auto hi = pairsAt(2.0);
        for (const auto& k : lo) {
            INFO("pair " << k.first << "->" << k.second);
            CHECK(hi.count(k) == 1);
        }
    }
}

TEST_CASE("total conflicts are invariant under id relabeling") {
    Rng rng(555);
    for (int i = 0; i < 20; ++i) {
        auto log = random_log(rng);
        SafetyParams p;
        WorkZoneLayout layout;
        auto count = [&](const std::vector<TrajectorySample>& l) {
            auto events = detect_vehicle_conflicts(l, p.ttcThreshold, p);
            const auto singles = detect_single_vehicle_conflicts(l, layout, 0.75, p);
            events.insert(events.end(), singles.begin(), singles.end());
            return aggregate_indicators(events, {});
        };
        const auto before = count(log);
        for (auto& s : log) s.vehicleId = 1000 - s.vehicleId;  // order-reversing relabel
        const auto after = count(log);
        CHECK(before.totalConflicts == after.totalConflicts);
        CHECK(before.singleVehicleConflicts == after.singleVehicleConflicts);
        CHECK(before.multiVehicleConflicts == after.multiVehicleConflicts);
    }
}

TEST_CASE("indicator aggregation counts events and classes") {
    CHECK(aggregate_indicators({}, {}).totalConflicts == 0);
    std::vector<TocEvent> toc = {
        {TocEventKind::TorIssued, 1.0, 1, VehicleKind::Small},
        {TocEventKind::TorIssued, 2.0, 2, VehicleKind::Small},
        {TocEventKind::TorIssued, 3.0, 3, VehicleKind::Large},
        {TocEventKind::MrmStarted, 4.0, 1, VehicleKind::Small},
    };
    const auto t = aggregate_indicators({}, toc);
    CHECK(t.disengagementsSV == 2);
    CHECK(t.disengagementsLV == 1);
    CHECK(t.disengagementsTotal == 3);
    CHECK(t.mrmSV == 1);
    CHECK(t.mrmLV == 0);
    CHECK(t.mrmTotal == 1);
}

TEST_CASE("malformed trajectory rows are reported with line numbers") {
    const auto path = std::filesystem::temp_directory_path() / "wzsim_bad_log.csv";
    {
        std::ofstream out(path);
        out << kTrajectoryCsvHeader << "\n";
        out << "0.10,1,small,0,1,10.000,5.000,0.000,manual\n";
        out << "0.20,1,small,0,1,not_a_number,5.000,0.000,manual\n";
    }
    try {
        read_trajectory_csv(path);
        FAIL("expected CsvError");
    } catch (const CsvError& e) {
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("trajectory csv round-trips through write and read") {
    Script leader{1, VehicleKind::Large, 2, 40.0, 15.0, {{30, 0.3}}, {}};
    Script follower{2, VehicleKind::Small, 2, 20.0, 15.0, {{30, -0.2}}, {{10, 1}}};
    const auto log = build_log({leader, follower}, 30);
    const auto path = std::filesystem::temp_directory_path() / "wzsim_roundtrip.csv";
    {
        CsvTrajectoryWriter writer(path);
        for (const auto& s : log) writer.onSample(s);
    }
    const auto back = read_trajectory_csv(path);
    REQUIRE(back.size() == log.size());
    for (size_t i = 0; i < log.size(); ++i) {
        CHECK(back[i].vehicleId == log[i].vehicleId);
        CHECK(back[i].lane == log[i].lane);
        CHECK(back[i].vehicleClass == log[i].vehicleClass);
        CHECK(back[i].mode == log[i].mode);
        CHECK(back[i].position == Catch::Approx(log[i].position).margin(1e-3));
        CHECK(back[i].speed == Catch::Approx(log[i].speed).margin(1e-3));
    }
    std::filesystem::remove(path);
}
