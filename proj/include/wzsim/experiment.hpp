#pragma once

#include <array>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "wzsim/engine.hpp"
#include "wzsim/safety.hpp"
#include "wzsim/scenario.hpp"
#include "wzsim/stats.hpp"

namespace wzsim {

enum class Factor {
    DisengagementThreshold = 0,
    TakeoverStyle,
    TrafficVolume,
    LargeVehicleShare,
    WarningAreaLength,
    WorkZoneSpeedLimit,
    Mpr,
};

constexpr int kFactorCount = 7;

inline const char* to_string(Factor f) {
    switch (f) {
        case Factor::DisengagementThreshold: return "disengagementThreshold";
        case Factor::TakeoverStyle: return "takeoverStyle";
        case Factor::TrafficVolume: return "trafficVolume";
        case Factor::LargeVehicleShare: return "largeVehicleShare";
        case Factor::WarningAreaLength: return "warningAreaLength";
        case Factor::WorkZoneSpeedLimit: return "workZoneSpeedLimit";
        case Factor::Mpr: return "mpr";
    }
    return "";
}

struct DesignRow {
    int rowNumber = 1;
    double thresholdS = 10.0;
    TakeoverStyleKind style = TakeoverStyleKind::Normal;
    double volumeVph = 2500.0;
    double largeShare = 0.02;     // fraction
    double warningLengthM = 600.0;
    double wzLimitKmh = 40.0;
    double mpr = 0.0;             // fraction
};

/// The 18-row mixed-level orthogonal arrangement used for the experiment,
/// hard-coded row by row rather than generated.
inline std::array<DesignRow, 18> build_l18_design() {
    using K = TakeoverStyleKind;
    return {{
        {1, 5, K::Aggressive, 2500, 0.02, 600, 40, 0.0},
        {2, 5, K::Aggressive, 2500, 0.22, 800, 60, 0.2},
        {3, 5, K::Aggressive, 2500, 0.50, 1000, 80, 0.4},
        {4, 5, K::Normal, 4500, 0.02, 800, 80, 0.6},
        {5, 5, K::Normal, 4500, 0.22, 1000, 40, 0.8},
        {6, 5, K::Normal, 4500, 0.50, 600, 60, 1.0},
        {7, 10, K::Normal, 3500, 0.02, 600, 40, 0.4},
        {8, 10, K::Normal, 3500, 0.22, 800, 60, 0.0},
        {9, 10, K::Normal, 3500, 0.50, 1000, 80, 0.2},
        {10, 10, K::Conservative, 2500, 0.02, 800, 80, 1.0},
        {11, 10, K::Conservative, 2500, 0.22, 1000, 40, 0.6},
        {12, 10, K::Conservative, 2500, 0.50, 600, 60, 0.8},
        {13, 15, K::Aggressive, 3500, 0.02, 800, 80, 0.8},
        {14, 15, K::Aggressive, 3500, 0.22, 1000, 40, 1.0},
        {15, 15, K::Aggressive, 3500, 0.50, 600, 60, 0.6},
        {16, 15, K::Conservative, 4500, 0.02, 600, 40, 0.2},
        {17, 15, K::Conservative, 4500, 0.22, 800, 60, 0.4},
        {18, 15, K::Conservative, 4500, 0.50, 1000, 80, 0.0},
    }};
}

// Numeric level value for grouping; takeover styles map to 1..3 in the
// aggressive/normal/conservative order.
inline double factor_level(const DesignRow& row, Factor f) {
    switch (f) {
        case Factor::DisengagementThreshold: return row.thresholdS;
        case Factor::TakeoverStyle: return static_cast<double>(static_cast<int>(row.style)) + 1.0;
        case Factor::TrafficVolume: return row.volumeVph;
        case Factor::LargeVehicleShare: return row.largeShare;
        case Factor::WarningAreaLength: return row.warningLengthM;
        case Factor::WorkZoneSpeedLimit: return row.wzLimitKmh;
        case Factor::Mpr: return row.mpr;
    }
    return 0.0;
}

inline std::string factor_level_label(const DesignRow& row, Factor f) {
    char buf[32];
    switch (f) {
        case Factor::TakeoverStyle: return to_string(row.style);
        case Factor::LargeVehicleShare:
            std::snprintf(buf, sizeof(buf), "%g%%", row.largeShare * 100.0);
            return buf;
        case Factor::Mpr:
            std::snprintf(buf, sizeof(buf), "%g%%", row.mpr * 100.0);
            return buf;
        default:
            std::snprintf(buf, sizeof(buf), "%g", factor_level(row, f));
            return buf;
    }
}

/// Overlay one design row on a base scenario. The taper station stays
/// where the base puts it; the warning area grows upstream from there.
inline ScenarioConfig apply_design_row(const ScenarioConfig& base, const DesignRow& row) {
    ScenarioConfig cfg = base;
    cfg.disengagementThreshold = row.thresholdS;
    cfg.takeoverStyle = takeover_style(row.style);
    cfg.trafficVolume = row.volumeVph;
    cfg.largeVehicleShare = row.largeShare;
    cfg.mpr = row.mpr;
    const double taperStation = base.layout.taperStart();
    cfg.layout.warningAreaLength = row.warningLengthM;
    cfg.layout.warningAreaStart = taperStation - row.warningLengthM;
    cfg.layout.workZoneSpeedLimit = kmh_to_ms(row.wzLimitKmh);
    return cfg;
}

enum class Indicator {
    SingleConflicts = 0,
    MultiConflicts,
    TotalConflicts,
    DisengagementsSV,
    DisengagementsLV,
    DisengagementsTotal,
    MrmSV,
    MrmLV,
    MrmTotal,
};

constexpr int kIndicatorCount = 9;

inline const char* to_string(Indicator i) {
    switch (i) {
        case Indicator::SingleConflicts: return "singleVehicleConflicts";
        case Indicator::MultiConflicts: return "multiVehicleConflicts";
        case Indicator::TotalConflicts: return "totalConflicts";
        case Indicator::DisengagementsSV: return "disengagementsSV";
        case Indicator::DisengagementsLV: return "disengagementsLV";
        case Indicator::DisengagementsTotal: return "disengagementsTotal";
        case Indicator::MrmSV: return "mrmSV";
        case Indicator::MrmLV: return "mrmLV";
        case Indicator::MrmTotal: return "mrmTotal";
    }
    return "";
}

inline std::uint64_t indicator_value(const IndicatorTable& t, Indicator i) {
    switch (i) {
        case Indicator::SingleConflicts: return t.singleVehicleConflicts;
        case Indicator::MultiConflicts: return t.multiVehicleConflicts;
        case Indicator::TotalConflicts: return t.totalConflicts;
        case Indicator::DisengagementsSV: return t.disengagementsSV;
        case Indicator::DisengagementsLV: return t.disengagementsLV;
        case Indicator::DisengagementsTotal: return t.disengagementsTotal;
        case Indicator::MrmSV: return t.mrmSV;
        case Indicator::MrmLV: return t.mrmLV;
        case Indicator::MrmTotal: return t.mrmTotal;
    }
    return 0;
}

struct TrialResult {
    int row = 1;
    int replication = 1;
    bool ok = false;
    std::string error;
    IndicatorTable indicators;
};

struct ExperimentResults {
    int replications = 2;
    std::vector<TrialResult> trials;  // ordered by (row, replication)
};

/// Per-trial output hooks; the CLI uses these to stream trajectory,
/// conflict and event CSVs into per-trial directories.
class TrialOutput {
public:
    virtual ~TrialOutput() = default;
    virtual TrajectoryConsumer* trajectoryConsumer() { return nullptr; }
    virtual void onFinish(const TrialResult& result, const std::vector<ConflictEvent>& conflicts,
                          const std::vector<TocEvent>& tocEvents, const SimSummary& summary) {
        (void)result;
        (void)conflicts;
        (void)tocEvents;
        (void)summary;
    }
};

using TrialOutputFactory =
    std::function<std::unique_ptr<TrialOutput>(int row, int replication, const ScenarioConfig&)>;

namespace detail {

struct FanOutConsumer : TrajectoryConsumer {
    std::vector<TrajectoryConsumer*> sinks;
    void onSample(const TrajectorySample& s) override {
        for (auto* sink : sinks) sink->onSample(s);
    }
};

}  // namespace detail

/// Run one configured trial end to end and aggregate its indicators.
inline TrialResult run_trial(const ScenarioConfig& cfg, int row, int replication,
                             TrialOutput* output = nullptr) {
    TrialResult result;
    result.row = row;
    result.replication = replication;
    try {
        const ValidatedScenario scenario = validate_scenario(cfg);
        SafetyParams params;
        params.ttcThreshold = cfg.ttcThreshold;
        params.emergencyBrakeFraction = cfg.emergencyBrakeFraction;
        Simulation sim(scenario);
        ConflictDetector detector(params, cfg.layout);
        detail::FanOutConsumer fan;
        fan.sinks.push_back(&detector);
        if (output && output->trajectoryConsumer()) fan.sinks.push_back(output->trajectoryConsumer());
        sim.setTrajectoryConsumer(&fan);
        sim.run();
        const auto conflicts = detector.finish();
        result.indicators = aggregate_indicators(conflicts, sim.tocEvents());
        result.ok = true;
        if (output) output->onFinish(result, conflicts, sim.tocEvents(), sim.summary());
    } catch (const std::exception& e) {
        result.ok = false;
        result.error = e.what();
        if (output) output->onFinish(result, {}, {}, {});
    }
    return result;
}

/// Execute the full design with the given number of replications, each
/// trial deterministically seeded from (masterSeed, row, replication).
/// Trials run concurrently up to `jobs`; failures are recorded in place
/// and do not stop the rest.
template <size_t N>
inline ExperimentResults run_experiment(const std::array<DesignRow, N>& design,
                                        const ScenarioConfig& baseScenario,
                                        std::uint64_t masterSeed, int replications = 2,
                                        int jobs = 1, const TrialOutputFactory& factory = {}) {
    ExperimentResults results;
    results.replications = replications;
    results.trials.resize(N * static_cast<size_t>(replications));

    std::atomic<size_t> nextTrial{0};
    auto worker = [&]() {
        while (true) {
            const size_t k = nextTrial.fetch_add(1);
            if (k >= results.trials.size()) break;
            const int rowIdx = static_cast<int>(k) / replications;
            const int rep = static_cast<int>(k) % replications + 1;
            const DesignRow& row = design[static_cast<size_t>(rowIdx)];
            ScenarioConfig cfg = apply_design_row(baseScenario, row);
            cfg.seed = mix_seed(masterSeed, static_cast<std::uint64_t>(row.rowNumber),
                                static_cast<std::uint64_t>(rep));
            std::unique_ptr<TrialOutput> output;
            if (factory) output = factory(row.rowNumber, rep, cfg);
            results.trials[k] = run_trial(cfg, row.rowNumber, rep, output.get());
        }
    };

    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return results;
}

// ---------------------------------------------------------------------------
// Range analysis and analysis of variance over the collected indicators.

struct LevelStat {
    std::string label;
    double level = 0.0;
    int count = 0;
    double sum = 0.0;
    double mean = 0.0;
};

struct FactorRange {
    Factor factor = Factor::DisengagementThreshold;
    std::vector<LevelStat> levels;
    double range = 0.0;  // max level mean - min level mean
};

namespace detail {

// Canonical level list of a factor, in table order.
inline std::vector<std::pair<double, std::string>> factor_levels(Factor f) {
    const auto design = build_l18_design();
    std::vector<std::pair<double, std::string>> levels;
    for (const auto& row : design) {
        const double v = factor_level(row, f);
        bool seen = false;
        for (const auto& [lv, label] : levels) seen = seen || lv == v;
        if (!seen) levels.emplace_back(v, factor_level_label(row, f));
    }
    std::sort(levels.begin(), levels.end());
    return levels;
}

}  // namespace detail

/// Level sums, means and the range R = max mean - min mean for every
/// factor, ranked by R descending. Missing trials are excluded with a
/// warning and adjusted denominators.
inline std::vector<FactorRange> range_analysis(const ExperimentResults& results, Indicator indicator,
                                               std::vector<std::string>* warnings = nullptr) {
    const auto design = build_l18_design();
    int missing = 0;
    std::vector<FactorRange> out;
    for (int fi = 0; fi < kFactorCount; ++fi) {
        const Factor f = static_cast<Factor>(fi);
        FactorRange fr;
        fr.factor = f;
        for (const auto& [value, label] : detail::factor_levels(f)) {
            LevelStat ls;
            ls.label = label;
            ls.level = value;
            fr.levels.push_back(ls);
        }
        for (const auto& trial : results.trials) {
            if (!trial.ok) continue;
            const DesignRow& row = design[static_cast<size_t>(trial.row - 1)];
            const double value = factor_level(row, f);
            for (auto& ls : fr.levels) {
                if (ls.level == value) {
                    ls.count += 1;
                    ls.sum += static_cast<double>(indicator_value(trial.indicators, indicator));
                }
            }
        }
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (auto& ls : fr.levels) {
            ls.mean = ls.count ? ls.sum / ls.count : 0.0;
            if (ls.count) {
                lo = std::min(lo, ls.mean);
                hi = std::max(hi, ls.mean);
            }
        }
        fr.range = hi >= lo ? hi - lo : 0.0;
        out.push_back(std::move(fr));
    }
    for (const auto& trial : results.trials) {
        if (!trial.ok) ++missing;
    }
    if (missing && warnings) {
        warnings->push_back(std::to_string(missing) +
                            " trial(s) missing; level means use adjusted denominators");
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const FactorRange& a, const FactorRange& b) { return a.range > b.range; });
    return out;
}

struct AnovaFactor {
    Factor factor = Factor::DisengagementThreshold;
    double ss = 0.0;
    int df = 0;
    double meanSquare = 0.0;
    double F = 0.0;
    double p = 1.0;
};

struct AnovaTable {
    std::vector<AnovaFactor> factors;  // natural factor order
    double ssTotal = 0.0;
    double ssError = 0.0;
    int dfTotal = 0;
    int dfError = 0;
    bool degenerate = false;
    std::vector<std::string> warnings;
};

/// Main-effects ANOVA. SS per factor from level means against the grand
/// mean; the error term is the remainder SS_total - sum(SS_factor) with
/// df_error = (N-1) - sum(df_factor). A vanishing error variance makes F
/// infinite with p = 0 and flags the table as degenerate.
inline AnovaTable anova(const ExperimentResults& results, Indicator indicator) {
    const auto design = build_l18_design();
    AnovaTable table;

    std::vector<std::pair<int, double>> values;  // (row index, indicator value)
    for (const auto& trial : results.trials) {
        if (!trial.ok) continue;
        values.emplace_back(trial.row - 1,
                            static_cast<double>(indicator_value(trial.indicators, indicator)));
    }
    const int n = static_cast<int>(values.size());
    if (n < 2) {
        table.warnings.push_back("fewer than two trials; analysis skipped");
        return table;
    }
    if (n < static_cast<int>(results.trials.size())) {
        table.warnings.push_back("missing trials excluded; the design is no longer balanced");
    }

    double grand = 0.0;
    for (const auto& [row, y] : values) grand += y;
    grand /= n;
    for (const auto& [row, y] : values) table.ssTotal += (y - grand) * (y - grand);
    table.dfTotal = n - 1;

    int dfFactors = 0;
    const double tiny = 1e-12 * std::max(1.0, table.ssTotal);
    for (int fi = 0; fi < kFactorCount; ++fi) {
        const Factor f = static_cast<Factor>(fi);
        AnovaFactor af;
        af.factor = f;
        const auto levels = detail::factor_levels(f);
        int presentLevels = 0;
        for (const auto& [value, label] : levels) {
            double sum = 0.0;
            int count = 0;
            for (const auto& [row, y] : values) {
                if (factor_level(design[static_cast<size_t>(row)], f) == value) {
                    sum += y;
                    ++count;
                }
            }
            if (!count) continue;
            ++presentLevels;
            const double mean = sum / count;
            af.ss += count * (mean - grand) * (mean - grand);
        }
        af.df = std::max(0, presentLevels - 1);
        dfFactors += af.df;
        table.factors.push_back(af);
    }

    double ssFactors = 0.0;
    for (const auto& af : table.factors) ssFactors += af.ss;
    table.ssError = table.ssTotal - ssFactors;
    table.dfError = table.dfTotal - dfFactors;

    const bool errorDegenerate = table.dfError <= 0 || table.ssError <= tiny;
    const double msError = errorDegenerate ? 0.0 : table.ssError / table.dfError;
    for (auto& af : table.factors) {
        af.meanSquare = af.df > 0 ? af.ss / af.df : 0.0;
        if (af.ss <= tiny || af.df == 0) {
            af.F = 0.0;
            af.p = 1.0;
        } else if (errorDegenerate) {
            af.F = std::numeric_limits<double>::infinity();
            af.p = 0.0;
        } else {
            af.F = af.meanSquare / msError;
            af.p = f_upper_tail(af.F, af.df, table.dfError);
        }
    }
    if (errorDegenerate && table.ssTotal > tiny) {
        table.degenerate = true;
        table.warnings.push_back("zero error variance; F reported as infinite where SS > 0");
    }
    return table;
}

// ---------------------------------------------------------------------------
// Report emission. Every file derives solely from the indicator table, so
// regenerating a report from a saved indicators.csv reproduces it byte for
// byte.

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    if (std::isinf(v)) return "inf";
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline const char* stars(double p) {
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "";
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

}  // namespace detail

inline const char* kIndicatorCsvHeader =
    "row,replication,singleVehicleConflicts,multiVehicleConflicts,totalConflicts,"
    "disengagementsSV,disengagementsLV,disengagementsTotal,mrmSV,mrmLV,mrmTotal";

inline void write_indicator_csv(const ExperimentResults& results, const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    out << kIndicatorCsvHeader << "\n";
    for (const auto& t : results.trials) {
        if (!t.ok) continue;
        const auto& i = t.indicators;
        out << t.row << ',' << t.replication << ',' << i.singleVehicleConflicts << ','
            << i.multiVehicleConflicts << ',' << i.totalConflicts << ',' << i.disengagementsSV << ','
            << i.disengagementsLV << ',' << i.disengagementsTotal << ',' << i.mrmSV << ',' << i.mrmLV
            << ',' << i.mrmTotal << "\n";
    }
}

/// Write indicators.csv, range_analysis.csv, anova.csv and summary.txt
/// under outDir.
inline void emit_report(const ExperimentResults& results, const std::filesystem::path& outDir) {
    std::filesystem::create_directories(outDir);
    write_indicator_csv(results, outDir / "indicators.csv");

    {
        auto out = detail::open_out(outDir / "range_analysis.csv");
        out << "indicator,factor,level,count,sum,mean,range\n";
        for (int ii = 0; ii < kIndicatorCount; ++ii) {
            const Indicator ind = static_cast<Indicator>(ii);
            auto ranges = range_analysis(results, ind);
            std::stable_sort(ranges.begin(), ranges.end(), [](const FactorRange& a, const FactorRange& b) {
                return static_cast<int>(a.factor) < static_cast<int>(b.factor);
            });
            for (const auto& fr : ranges) {
                for (const auto& ls : fr.levels) {
                    out << to_string(ind) << ',' << to_string(fr.factor) << ',' << ls.label << ','
                        << ls.count << ',' << detail::fmt(ls.sum) << ',' << detail::fmt(ls.mean) << ','
                        << detail::fmt(fr.range) << "\n";
                }
            }
        }
    }

    {
        auto out = detail::open_out(outDir / "anova.csv");
        out << "factor";
        for (int ii = 0; ii < kIndicatorCount; ++ii) out << ",p_" << to_string(static_cast<Indicator>(ii));
        out << "\n";
        std::vector<AnovaTable> tables;
        for (int ii = 0; ii < kIndicatorCount; ++ii)
            tables.push_back(anova(results, static_cast<Indicator>(ii)));
        for (int fi = 0; fi < kFactorCount; ++fi) {
            out << to_string(static_cast<Factor>(fi));
            for (const auto& t : tables) {
                out << ',' << (fi < static_cast<int>(t.factors.size()) ? detail::fmt(t.factors[static_cast<size_t>(fi)].p) : "");
            }
            out << "\n";
        }
    }

    {
        auto out = detail::open_out(outDir / "summary.txt");
        int okTrials = 0;
        for (const auto& t : results.trials) okTrials += t.ok ? 1 : 0;
        out << "Work zone experiment summary\n";
        out << "============================\n";
        out << "trials: " << okTrials << " of " << results.trials.size() << " ("
            << results.replications << " replication(s) per design row)\n";
        out << "ANOVA model: seven main effects, no interactions, no intercept row.\n";
        {
            // df bookkeeping made explicit so any external comparison can
            // reconcile the error term.
            const AnovaTable t = anova(results, Indicator::TotalConflicts);
            out << "df bookkeeping: total " << t.dfTotal << ", factors";
            int sum = 0;
            for (const auto& af : t.factors) {
                out << ' ' << af.df;
                sum += af.df;
            }
            out << " (sum " << sum << "), error " << t.dfError << "\n";
        }
        out << "significance flags: * p < 0.05, ** p < 0.01\n\n";

        for (const auto& t : results.trials) {
            if (!t.ok) out << "MISSING trial row " << t.row << " rep " << t.replication << ": " << t.error << "\n";
        }

        for (int ii = 0; ii < kIndicatorCount; ++ii) {
            const Indicator ind = static_cast<Indicator>(ii);
            out << "[" << to_string(ind) << "]\n";
            std::vector<std::string> warnings;
            const auto ranges = range_analysis(results, ind, &warnings);
            const auto table = anova(results, ind);
            out << "  factors by range:";
            for (const auto& fr : ranges) out << ' ' << to_string(fr.factor) << " (R=" << detail::fmt(fr.range) << ")";
            out << "\n";
            for (const auto& af : table.factors) {
                out << "  " << to_string(af.factor) << ": SS=" << detail::fmt(af.ss) << " df=" << af.df
                    << " F=" << detail::fmt(af.F) << " p=" << detail::fmt(af.p) << detail::stars(af.p)
                    << "\n";
            }
            out << "  error: SS=" << detail::fmt(table.ssError) << " df=" << table.dfError
                << "; total: SS=" << detail::fmt(table.ssTotal) << " df=" << table.dfTotal << "\n";
            for (const auto& w : warnings) out << "  warning: " << w << "\n";
            for (const auto& w : table.warnings) out << "  warning: " << w << "\n";
            if (ind == Indicator::TotalConflicts) {
                out << "  best level per factor (lowest mean totalConflicts):";
                auto natural = ranges;
                std::stable_sort(natural.begin(), natural.end(), [](const FactorRange& a, const FactorRange& b) {
                    return static_cast<int>(a.factor) < static_cast<int>(b.factor);
                });
                for (const auto& fr : natural) {
                    const LevelStat* best = nullptr;
                    for (const auto& ls : fr.levels) {
                        if (ls.count && (!best || ls.mean < best->mean)) best = &ls;
                    }
                    out << ' ' << to_string(fr.factor) << "=" << (best ? best->label : "n/a");
                }
                out << "\n";
            }
            out << "\n";
        }
    }
}

}  // namespace wzsim
