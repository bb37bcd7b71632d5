#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wzsim/engine.hpp"
#include "wzsim/experiment.hpp"
#include "wzsim/safety.hpp"
#include "wzsim/toc.hpp"

namespace wzsim {

class CsvError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string csv_num(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

}  // namespace detail

inline const char* kTrajectoryCsvHeader = "time,vehicleId,class,automated,lane,position,speed,accel,mode";

inline std::string trajectory_csv_row(const TrajectorySample& s) {
    std::string row = detail::csv_num(s.time, 2);
    row += ',';
    row += std::to_string(s.vehicleId);
    row += ',';
    row += to_string(s.vehicleClass);
    row += ',';
    row += s.automated ? '1' : '0';
    row += ',';
    row += std::to_string(s.lane);
    row += ',';
    row += detail::csv_num(s.position, 3);
    row += ',';
    row += detail::csv_num(s.speed, 3);
    row += ',';
    row += detail::csv_num(s.accel, 3);
    row += ',';
    row += to_string(s.mode);
    return row;
}

/// Streams trajectory samples straight to a CSV file; a full trial never
/// needs to be held in memory.
class CsvTrajectoryWriter : public TrajectoryConsumer {
public:
    explicit CsvTrajectoryWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw CsvError("cannot write trajectory csv: " + path.string());
        out_ << kTrajectoryCsvHeader << "\n";
    }

    void onSample(const TrajectorySample& s) override { out_ << trajectory_csv_row(s) << "\n"; }

private:
    std::ofstream out_;
};

/// Parse a trajectory CSV; malformed rows are reported with their line
/// number.
inline std::vector<TrajectorySample> read_trajectory_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open trajectory csv: " + path.string());
    std::vector<TrajectorySample> samples;
    std::string line;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineNo == 1) {
            if (line != kTrajectoryCsvHeader)
                throw CsvError(path.string() + ":1: unexpected trajectory header: " + line);
            continue;
        }
        if (line.empty()) continue;
        const auto fields = detail::split_csv(line);
        if (fields.size() != 9)
            throw CsvError(path.string() + ":" + std::to_string(lineNo) + ": expected 9 fields, got " +
                           std::to_string(fields.size()));
        try {
            TrajectorySample s;
            s.time = std::stod(fields[0]);
            s.vehicleId = std::stoi(fields[1]);
            if (fields[2] == "small") s.vehicleClass = VehicleKind::Small;
            else if (fields[2] == "large") s.vehicleClass = VehicleKind::Large;
            else throw std::invalid_argument("class " + fields[2]);
            s.automated = fields[3] == "1";
            s.lane = std::stoi(fields[4]);
            s.position = std::stod(fields[5]);
            s.speed = std::stod(fields[6]);
            s.accel = std::stod(fields[7]);
            const auto mode = drive_mode_from_string(fields[8]);
            if (!mode) throw std::invalid_argument("mode " + fields[8]);
            s.mode = *mode;
            samples.push_back(s);
        } catch (const std::exception& e) {
            throw CsvError(path.string() + ":" + std::to_string(lineNo) + ": bad row (" + e.what() +
                           "): " + line);
        }
    }
    return samples;
}

inline const char* kTocCsvHeader = "time,vehicleId,vehicleClass,eventKind";

inline void write_toc_csv(const std::vector<TocEvent>& events, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CsvError("cannot write toc event csv: " + path.string());
    out << kTocCsvHeader << "\n";
    for (const auto& e : events) {
        out << detail::csv_num(e.time, 2) << ',' << e.vehicleId << ',' << to_string(e.vehicleClass)
            << ',' << to_string(e.kind) << "\n";
    }
}

inline const char* kConflictCsvHeader = "time,kind,primary,secondary,minTtc,maxDecel,lane,position";

inline void write_conflict_csv(const std::vector<ConflictEvent>& events,
                               const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CsvError("cannot write conflict csv: " + path.string());
    out << kConflictCsvHeader << "\n";
    for (const auto& e : events) {
        out << detail::csv_num(e.time, 2) << ',' << to_string(e.kind) << ',' << e.primaryVehicle << ',';
        if (e.secondaryVehicle) out << *e.secondaryVehicle;
        out << ',';
        if (e.minTtc) out << detail::csv_num(*e.minTtc, 3);
        out << ',' << detail::csv_num(e.maxDecel, 3) << ',' << e.lane << ','
            << detail::csv_num(e.position, 3) << "\n";
    }
}

inline void write_summary_text(const SimSummary& s, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CsvError("cannot write summary: " + path.string());
    out << "inserted = " << s.inserted << "\n";
    out << "exited = " << s.exited << "\n";
    out << "on_road = " << s.onRoad << "\n";
    out << "queued = " << s.queued << "\n";
    out << "throughput = " << s.throughput << "\n";
    out << "lane_changes = " << s.laneChanges << "\n";
    out << "disengagements = " << s.disengagements << "\n";
    out << "mrms = " << s.mrms << "\n";
    out << "mean_speed_ms = " << detail::csv_num(s.meanSpeed, 3) << "\n";
}

/// Rebuild an ExperimentResults table from a saved indicators.csv, so the
/// statistics can be recomputed without rerunning any simulation.
inline ExperimentResults read_indicator_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open indicator csv: " + path.string());
    ExperimentResults results;
    results.replications = 0;
    std::string line;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineNo == 1) {
            if (line != kIndicatorCsvHeader)
                throw CsvError(path.string() + ":1: unexpected indicator header: " + line);
            continue;
        }
        if (line.empty()) continue;
        const auto fields = detail::split_csv(line);
        if (fields.size() != 11)
            throw CsvError(path.string() + ":" + std::to_string(lineNo) + ": expected 11 fields, got " +
                           std::to_string(fields.size()));
        try {
            TrialResult t;
            t.ok = true;
            t.row = std::stoi(fields[0]);
            t.replication = std::stoi(fields[1]);
            auto u64 = [&fields](int i) { return static_cast<std::uint64_t>(std::stoull(fields[static_cast<size_t>(i)])); };
            t.indicators.singleVehicleConflicts = u64(2);
            t.indicators.multiVehicleConflicts = u64(3);
            t.indicators.totalConflicts = u64(4);
            t.indicators.disengagementsSV = u64(5);
            t.indicators.disengagementsLV = u64(6);
            t.indicators.disengagementsTotal = u64(7);
            t.indicators.mrmSV = u64(8);
            t.indicators.mrmLV = u64(9);
            t.indicators.mrmTotal = u64(10);
            results.replications = std::max(results.replications, t.replication);
            results.trials.push_back(t);
        } catch (const std::exception& e) {
            throw CsvError(path.string() + ":" + std::to_string(lineNo) + ": bad row (" + e.what() +
                           "): " + line);
        }
    }
    return results;
}

}  // namespace wzsim
