#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wzsim/driving.hpp"
#include "wzsim/types.hpp"

namespace wzsim {

/// One fully specified trial: geometry, demand, behavior levers, numerics
/// and the seed. Value object; copy freely.
struct ScenarioConfig {
    WorkZoneLayout layout;
    double trafficVolume = 2500.0;      // veh/h
    double largeVehicleShare = 0.02;    // fraction of arrivals
    double mpr = 0.0;                   // automated-vehicle market penetration
    double disengagementThreshold = 10.0;  // s, dynamic TOR trigger
    TakeoverStyle takeoverStyle = takeover_style(TakeoverStyleKind::Normal);
    double torLeadTime = 10.0;          // s reserved for the driver response
    TruncNormalSpec responseTime{5.0, 4.0, 0.5, 30.0};  // s
    double stepLength = 0.1;            // s
    double duration = 3600.0;           // s, recorded horizon
    double warmup = 600.0;              // s, excluded from all indicators
    std::uint64_t seed = 1;

    AccSettings acc;
    double lcAssertive = 1.3;
    double ttcThreshold = 1.5;             // s, conflict detection
    double emergencyBrakeFraction = 0.75;  // of emergencyDecel
};

struct ValidationIssue {
    std::string field;
    std::string message;
};

inline std::vector<ValidationIssue> validate_scenario_issues(const ScenarioConfig& c) {
    std::vector<ValidationIssue> out;
    auto bad = [&out](const std::string& field, const std::string& msg) {
        out.push_back({field, msg});
    };
    auto fmt = [](double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };

    const WorkZoneLayout& L = c.layout;
    if (L.laneCount < 2) bad("layout.laneCount", "at least two lanes required (got " + std::to_string(L.laneCount) + ")");
    if (L.closedLanes.empty()) bad("layout.closedLanes", "must be nonempty");
    {
        std::set<int> seen;
        for (int lane : L.closedLanes) {
            if (lane < 1 || lane > L.laneCount)
                bad("layout.closedLanes", "lane " + std::to_string(lane) + " outside [1, " + std::to_string(L.laneCount) + "]");
            if (!seen.insert(lane).second)
                bad("layout.closedLanes", "lane " + std::to_string(lane) + " listed twice");
        }
        if (static_cast<int>(seen.size()) >= L.laneCount)
            bad("layout.closedLanes", "must be a strict subset of the lanes");
    }
    if (L.roadLength <= 0) bad("layout.roadLength", "must be positive (got " + fmt(L.roadLength) + ")");
    if (L.warningAreaStart < 0) bad("layout.warningAreaStart", "must be >= 0 (got " + fmt(L.warningAreaStart) + ")");
    if (L.warningAreaLength <= 0) bad("layout.warningAreaLength", "must be positive (got " + fmt(L.warningAreaLength) + ")");
    if (L.taperLength <= 0) bad("layout.taperLength", "must be positive (got " + fmt(L.taperLength) + ")");
    if (L.activityAreaLength < 0) bad("layout.activityAreaLength", "must be >= 0 (got " + fmt(L.activityAreaLength) + ")");
    if (L.downstreamLength < 0) bad("layout.downstreamLength", "must be >= 0 (got " + fmt(L.downstreamLength) + ")");
    const double extent = L.warningAreaStart + L.warningAreaLength + L.taperLength +
                          L.activityAreaLength + L.downstreamLength;
    if (extent > L.roadLength)
        bad("layout", "work zone extent " + fmt(extent) + " m exceeds roadLength " + fmt(L.roadLength) + " m");
    if (L.normalSpeedLimit <= 0) bad("layout.normalSpeedLimit", "must be positive (got " + fmt(L.normalSpeedLimit) + ")");
    if (L.workZoneSpeedLimit <= 0) bad("layout.workZoneSpeedLimit", "must be positive (got " + fmt(L.workZoneSpeedLimit) + ")");
    if (L.workZoneSpeedLimit > L.normalSpeedLimit)
        bad("layout.workZoneSpeedLimit",
            "must not exceed normalSpeedLimit (got " + fmt(ms_to_kmh(L.workZoneSpeedLimit)) + " km/h vs " +
                fmt(ms_to_kmh(L.normalSpeedLimit)) + " km/h)");

    if (c.trafficVolume <= 0) bad("trafficVolume", "must be positive (got " + fmt(c.trafficVolume) + ")");
    if (c.largeVehicleShare < 0 || c.largeVehicleShare > 1)
        bad("largeVehicleShare", "out of [0,1] (got " + fmt(c.largeVehicleShare) + ")");
    if (c.mpr < 0 || c.mpr > 1) bad("mpr", "out of [0,1] (got " + fmt(c.mpr) + ")");
    if (c.disengagementThreshold <= 0)
        bad("disengagementThreshold", "must be positive (got " + fmt(c.disengagementThreshold) + ")");
    if (c.takeoverStyle.mrmDecel <= 0) bad("takeoverStyle.mrmDecel", "must be positive");
    if (c.torLeadTime <= 0) bad("torLeadTime", "must be positive (got " + fmt(c.torLeadTime) + ")");
    if (!(c.responseTime.lo < c.responseTime.hi))
        bad("responseTime", "lo must be < hi (got lo " + fmt(c.responseTime.lo) + ", hi " + fmt(c.responseTime.hi) + ")");
    if (c.responseTime.sd < 0) bad("responseTime.sd", "must be >= 0 (got " + fmt(c.responseTime.sd) + ")");
    if (c.responseTime.lo < 0) bad("responseTime.lo", "must be >= 0 (got " + fmt(c.responseTime.lo) + ")");
    if (c.stepLength <= 0) bad("stepLength", "must be positive (got " + fmt(c.stepLength) + ")");
    if (c.duration <= 0) bad("duration", "must be positive (got " + fmt(c.duration) + ")");
    if (c.warmup < 0) bad("warmup", "must be >= 0 (got " + fmt(c.warmup) + ")");
    if (c.acc.desiredTimeGap <= 0) bad("acc.desiredTimeGap", "must be positive");
    if (c.acc.minGap <= 0) bad("acc.minGap", "must be positive");
    if (c.acc.speedGain <= 0) bad("acc.speedGain", "must be positive");
    if (c.acc.gapGain <= 0) bad("acc.gapGain", "must be positive");
    if (c.acc.speedDiffGain <= 0) bad("acc.speedDiffGain", "must be positive");
    if (c.acc.detectionRange <= 0) bad("acc.detectionRange", "must be positive");
    if (c.lcAssertive < 1.0) bad("lcAssertive", "must be >= 1 (got " + fmt(c.lcAssertive) + ")");
    if (c.ttcThreshold <= 0) bad("ttcThreshold", "must be positive (got " + fmt(c.ttcThreshold) + ")");
    if (c.emergencyBrakeFraction <= 0 || c.emergencyBrakeFraction > 1)
        bad("emergencyBrakeFraction", "out of (0,1] (got " + fmt(c.emergencyBrakeFraction) + ")");
    return out;
}

class ScenarioError : public std::runtime_error {
public:
    ScenarioError(std::string what, std::vector<ValidationIssue> issues)
        : std::runtime_error(std::move(what)), issues_(std::move(issues)) {}
    const std::vector<ValidationIssue>& issues() const { return issues_; }

private:
    std::vector<ValidationIssue> issues_;
};

/// A ScenarioConfig that passed validation. Constructible only through
/// validate_scenario.
class ValidatedScenario {
public:
    const ScenarioConfig& config() const { return cfg_; }

private:
    friend ValidatedScenario validate_scenario(const ScenarioConfig&);
    explicit ValidatedScenario(ScenarioConfig cfg) : cfg_(std::move(cfg)) {}
    ScenarioConfig cfg_;
};

inline ValidatedScenario validate_scenario(const ScenarioConfig& c) {
    auto issues = validate_scenario_issues(c);
    if (!issues.empty()) {
        std::ostringstream os;
        os << "invalid scenario (" << issues.size() << " issue" << (issues.size() == 1 ? "" : "s") << "):";
        for (const auto& i : issues) os << "\n  " << i.field << ": " << i.message;
        throw ScenarioError(os.str(), std::move(issues));
    }
    return ValidatedScenario(c);
}

// ---------------------------------------------------------------------------
// Config file format: "[section]" headers and "key = value" lines, '#'
// comments. Every field has a stable key; unknown sections or keys are
// rejected. Speed limits are written in km/h, internal units are m/s.

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct ConfigEntry {
    std::string value;
    int line = 0;
};

}  // namespace detail

class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline ScenarioConfig parse_scenario_text(const std::string& text) {
    std::map<std::string, detail::ConfigEntry> entries;  // "section.key" -> value
    {
        std::istringstream in(text);
        std::string line, section;
        int lineNo = 0;
        while (std::getline(in, line)) {
            ++lineNo;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError("line " + std::to_string(lineNo) + ": malformed section header");
                section = detail::trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineNo) + ": expected key = value");
            const std::string key = detail::trim(line.substr(0, eq));
            const std::string value = detail::trim(line.substr(eq + 1));
            if (section.empty()) throw ConfigError("line " + std::to_string(lineNo) + ": key '" + key + "' outside any section");
            entries[section + "." + key] = {value, lineNo};
        }
    }

    ScenarioConfig cfg;
    std::set<std::string> consumed;
    auto take = [&](const std::string& key) -> const detail::ConfigEntry* {
        auto it = entries.find(key);
        if (it == entries.end()) return nullptr;
        consumed.insert(key);
        return &it->second;
    };
    auto numeric = [&](const std::string& key, double& target) {
        if (const auto* e = take(key)) {
            try {
                size_t pos = 0;
                target = std::stod(e->value, &pos);
                if (pos != e->value.size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw ConfigError("line " + std::to_string(e->line) + ": '" + key + "' is not a number: " + e->value);
            }
        }
    };
    auto numeric_kmh = [&](const std::string& key, double& target_ms) {
        double kmh = ms_to_kmh(target_ms);
        numeric(key, kmh);
        target_ms = kmh_to_ms(kmh);
    };

    if (const auto* e = take("layout.lane_count")) cfg.layout.laneCount = std::stoi(e->value);
    if (const auto* e = take("layout.closed_lanes")) {
        cfg.layout.closedLanes.clear();
        std::istringstream ls(e->value);
        std::string item;
        while (std::getline(ls, item, ',')) {
            item = detail::trim(item);
            if (item.empty()) continue;
            try {
                cfg.layout.closedLanes.push_back(std::stoi(item));
            } catch (const std::exception&) {
                throw ConfigError("line " + std::to_string(e->line) + ": closed_lanes entry is not a lane index: " + item);
            }
        }
    }
    numeric("layout.road_length_m", cfg.layout.roadLength);
    numeric("layout.warning_area_start_m", cfg.layout.warningAreaStart);
    numeric("layout.warning_area_length_m", cfg.layout.warningAreaLength);
    numeric("layout.taper_length_m", cfg.layout.taperLength);
    numeric("layout.activity_area_length_m", cfg.layout.activityAreaLength);
    numeric("layout.downstream_length_m", cfg.layout.downstreamLength);
    numeric_kmh("layout.normal_speed_limit_kmh", cfg.layout.normalSpeedLimit);
    numeric_kmh("layout.work_zone_speed_limit_kmh", cfg.layout.workZoneSpeedLimit);

    numeric("demand.traffic_volume_vph", cfg.trafficVolume);
    numeric("demand.large_vehicle_share", cfg.largeVehicleShare);
    numeric("demand.mpr", cfg.mpr);

    numeric("toc.disengagement_threshold_s", cfg.disengagementThreshold);
    if (const auto* e = take("toc.takeover_style")) {
        if (e->value == "aggressive") cfg.takeoverStyle = takeover_style(TakeoverStyleKind::Aggressive);
        else if (e->value == "normal") cfg.takeoverStyle = takeover_style(TakeoverStyleKind::Normal);
        else if (e->value == "conservative") cfg.takeoverStyle = takeover_style(TakeoverStyleKind::Conservative);
        else throw ConfigError("line " + std::to_string(e->line) + ": unknown takeover_style: " + e->value);
    }
    numeric("toc.tor_lead_time_s", cfg.torLeadTime);

    numeric("response_time.mean_s", cfg.responseTime.mean);
    numeric("response_time.sd_s", cfg.responseTime.sd);
    numeric("response_time.lo_s", cfg.responseTime.lo);
    numeric("response_time.hi_s", cfg.responseTime.hi);

    numeric("simulation.step_length_s", cfg.stepLength);
    numeric("simulation.duration_s", cfg.duration);
    numeric("simulation.warmup_s", cfg.warmup);
    if (const auto* e = take("simulation.seed")) {
        try {
            cfg.seed = std::stoull(e->value);
        } catch (const std::exception&) {
            throw ConfigError("line " + std::to_string(e->line) + ": seed is not an integer: " + e->value);
        }
    }

    numeric("acc.desired_time_gap_s", cfg.acc.desiredTimeGap);
    numeric("acc.min_gap_m", cfg.acc.minGap);
    numeric("acc.speed_gain", cfg.acc.speedGain);
    numeric("acc.gap_gain", cfg.acc.gapGain);
    numeric("acc.speed_diff_gain", cfg.acc.speedDiffGain);
    numeric("acc.detection_range_m", cfg.acc.detectionRange);

    numeric("lane_change.lc_assertive", cfg.lcAssertive);
    numeric("safety.ttc_threshold_s", cfg.ttcThreshold);
    numeric("safety.emergency_brake_fraction", cfg.emergencyBrakeFraction);

    std::vector<std::string> unknown;
    for (const auto& [key, entry] : entries) {
        if (!consumed.count(key)) unknown.push_back(key + " (line " + std::to_string(entry.line) + ")");
    }
    if (!unknown.empty()) {
        std::string msg = "unknown config key(s):";
        for (const auto& k : unknown) msg += " " + k;
        throw ConfigError(msg);
    }
    return cfg;
}

inline ScenarioConfig load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario_text(ss.str());
}

inline std::string scenario_to_text(const ScenarioConfig& c) {
    std::ostringstream os;
    os.precision(12);
    os << "[layout]\n";
    os << "lane_count = " << c.layout.laneCount << "\n";
    os << "closed_lanes = ";
    for (size_t i = 0; i < c.layout.closedLanes.size(); ++i)
        os << (i ? "," : "") << c.layout.closedLanes[i];
    os << "\n";
    os << "road_length_m = " << c.layout.roadLength << "\n";
    os << "warning_area_start_m = " << c.layout.warningAreaStart << "\n";
    os << "warning_area_length_m = " << c.layout.warningAreaLength << "\n";
    os << "taper_length_m = " << c.layout.taperLength << "\n";
    os << "activity_area_length_m = " << c.layout.activityAreaLength << "\n";
    os << "downstream_length_m = " << c.layout.downstreamLength << "\n";
    os << "normal_speed_limit_kmh = " << ms_to_kmh(c.layout.normalSpeedLimit) << "\n";
    os << "work_zone_speed_limit_kmh = " << ms_to_kmh(c.layout.workZoneSpeedLimit) << "\n\n";
    os << "[demand]\n";
    os << "traffic_volume_vph = " << c.trafficVolume << "\n";
    os << "large_vehicle_share = " << c.largeVehicleShare << "\n";
    os << "mpr = " << c.mpr << "\n\n";
    os << "[toc]\n";
    os << "disengagement_threshold_s = " << c.disengagementThreshold << "\n";
    os << "takeover_style = " << to_string(c.takeoverStyle.name) << "\n";
    os << "tor_lead_time_s = " << c.torLeadTime << "\n\n";
    os << "[response_time]\n";
    os << "mean_s = " << c.responseTime.mean << "\n";
    os << "sd_s = " << c.responseTime.sd << "\n";
    os << "lo_s = " << c.responseTime.lo << "\n";
    os << "hi_s = " << c.responseTime.hi << "\n\n";
    os << "[simulation]\n";
    os << "step_length_s = " << c.stepLength << "\n";
    os << "duration_s = " << c.duration << "\n";
    os << "warmup_s = " << c.warmup << "\n";
    os << "seed = " << c.seed << "\n\n";
    os << "[acc]\n";
    os << "desired_time_gap_s = " << c.acc.desiredTimeGap << "\n";
    os << "min_gap_m = " << c.acc.minGap << "\n";
    os << "speed_gain = " << c.acc.speedGain << "\n";
    os << "gap_gain = " << c.acc.gapGain << "\n";
    os << "speed_diff_gain = " << c.acc.speedDiffGain << "\n";
    os << "detection_range_m = " << c.acc.detectionRange << "\n\n";
    os << "[lane_change]\n";
    os << "lc_assertive = " << c.lcAssertive << "\n\n";
    os << "[safety]\n";
    os << "ttc_threshold_s = " << c.ttcThreshold << "\n";
    os << "emergency_brake_fraction = " << c.emergencyBrakeFraction << "\n";
    return os.str();
}

inline void save_scenario_file(const ScenarioConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write scenario file: " + path);
    out << scenario_to_text(c);
}

}  // namespace wzsim
