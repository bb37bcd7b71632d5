#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wzsim/csv.hpp"
#include "wzsim/engine.hpp"
#include "wzsim/experiment.hpp"
#include "wzsim/safety.hpp"
#include "wzsim/scenario.hpp"

namespace fs = std::filesystem;
using namespace wzsim;

namespace {

void print_summary(const SimSummary& s) {
    std::cout << "inserted " << s.inserted << ", exited " << s.exited << ", on road " << s.onRoad
              << ", queued " << s.queued << "\n";
    std::cout << "throughput " << s.throughput << " veh, mean speed " << ms_to_kmh(s.meanSpeed)
              << " km/h, lane changes " << s.laneChanges << "\n";
    std::cout << "disengagements " << s.disengagements << ", MRMs " << s.mrms << "\n";
}

int cmd_run(const std::string& scenarioPath, std::optional<std::uint64_t> seed, const fs::path& outDir) {
    ScenarioConfig cfg = load_scenario_file(scenarioPath);
    if (seed) cfg.seed = *seed;
    const ValidatedScenario scenario = validate_scenario(cfg);

    fs::create_directories(outDir);
    SafetyParams params;
    params.ttcThreshold = cfg.ttcThreshold;
    params.emergencyBrakeFraction = cfg.emergencyBrakeFraction;

    Simulation sim(scenario);
    ConflictDetector detector(params, cfg.layout);
    CsvTrajectoryWriter trajectory(outDir / "trajectory.csv");
    detail::FanOutConsumer fan;
    fan.sinks = {&detector, &trajectory};
    sim.setTrajectoryConsumer(&fan);
    sim.run();

    const auto conflicts = detector.finish();
    const auto indicators = aggregate_indicators(conflicts, sim.tocEvents());
    write_toc_csv(sim.tocEvents(), outDir / "toc_events.csv");
    write_conflict_csv(conflicts, outDir / "conflicts.csv");
    write_summary_text(sim.summary(), outDir / "summary.txt");
    {
        ExperimentResults single;
        single.replications = 1;
        TrialResult t;
        t.row = 1;
        t.replication = 1;
        t.ok = true;
        t.indicators = indicators;
        single.trials.push_back(t);
        write_indicator_csv(single, outDir / "indicators.csv");
    }

    print_summary(sim.summary());
    std::cout << "conflicts: " << indicators.singleVehicleConflicts << " single, "
              << indicators.multiVehicleConflicts << " multi, " << indicators.totalConflicts
              << " total\n";
    std::cout << "outputs in " << outDir.string() << "\n";
    return 0;
}

class TrialDirOutput : public TrialOutput {
public:
    TrialDirOutput(fs::path dir) : dir_(std::move(dir)) {
        fs::create_directories(dir_);
        trajectory_ = std::make_unique<CsvTrajectoryWriter>(dir_ / "trajectory.csv");
    }

    TrajectoryConsumer* trajectoryConsumer() override { return trajectory_.get(); }

    void onFinish(const TrialResult& result, const std::vector<ConflictEvent>& conflicts,
                  const std::vector<TocEvent>& tocEvents, const SimSummary& summary) override {
        trajectory_.reset();  // flush before anything reads it
        if (!result.ok) {
            std::ofstream err(dir_ / "error.txt");
            err << result.error << "\n";
            return;
        }
        write_conflict_csv(conflicts, dir_ / "conflicts.csv");
        write_toc_csv(tocEvents, dir_ / "toc_events.csv");
        write_summary_text(summary, dir_ / "summary.txt");
    }

private:
    fs::path dir_;
    std::unique_ptr<CsvTrajectoryWriter> trajectory_;
};

int cmd_experiment(const std::string& scenarioPath, std::uint64_t seed, int replications, int jobs,
                   const fs::path& outDir, bool trialLogs) {
    const ScenarioConfig base = load_scenario_file(scenarioPath);
    {
        // Fail early if any design row produces an invalid scenario.
        for (const auto& row : build_l18_design()) validate_scenario(apply_design_row(base, row));
    }
    fs::create_directories(outDir);

    TrialOutputFactory factory;
    if (trialLogs) {
        factory = [&outDir](int row, int rep, const ScenarioConfig&) -> std::unique_ptr<TrialOutput> {
            return std::make_unique<TrialDirOutput>(
                outDir / ("trial_" + std::to_string(row) + "_" + std::to_string(rep)));
        };
    }

    const auto design = build_l18_design();
    const auto results = run_experiment(design, base, seed, replications, jobs, factory);
    emit_report(results, outDir);

    int okTrials = 0;
    for (const auto& t : results.trials) {
        if (t.ok) {
            ++okTrials;
        } else {
            std::cerr << "trial row " << t.row << " rep " << t.replication << " failed: " << t.error
                      << "\n";
        }
    }
    std::cout << okTrials << "/" << results.trials.size() << " trials completed; report in "
              << outDir.string() << "\n";
    return okTrials == static_cast<int>(results.trials.size()) ? 0 : 1;
}

int cmd_analyze(const std::string& indicatorsPath, const fs::path& outDir) {
    const ExperimentResults results = read_indicator_csv(indicatorsPath);
    emit_report(results, outDir);
    std::cout << "report for " << results.trials.size() << " trials in " << outDir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Work zone traffic simulator and safety assessment"};
    app.require_subcommand(1);

    std::string scenarioPath;
    std::string indicatorsPath;
    std::string outDir;
    std::uint64_t seed = 0;
    bool seedSet = false;
    int replications = 2;
    int jobs = 1;
    bool noTrialLogs = false;

    auto* run = app.add_subcommand("run", "Run a single trial");
    run->add_option("scenario", scenarioPath, "Scenario config file")->required();
    run->add_option("--seed", seed, "Override the scenario seed")->each([&](const std::string&) { seedSet = true; });
    run->add_option("--out", outDir, "Output directory")->default_val("run_out");

    auto* experiment = app.add_subcommand("experiment", "Run the 18-row design");
    experiment->add_option("scenario", scenarioPath, "Base scenario config file")->required();
    experiment->add_option("--seed", seed, "Master seed")->default_val("1");
    experiment->add_option("--replications", replications, "Replications per design row")->default_val("2");
    experiment->add_option("--jobs", jobs, "Concurrent trials")->default_val("1");
    experiment->add_option("--out", outDir, "Output directory")->default_val("experiment_out");
    experiment->add_flag("--no-trial-logs", noTrialLogs, "Skip per-trial trajectory/conflict CSVs");

    auto* analyze = app.add_subcommand("analyze", "Recompute statistics from an indicators.csv");
    analyze->add_option("indicators", indicatorsPath, "indicators.csv from a previous experiment")->required();
    analyze->add_option("--out", outDir, "Output directory")->default_val("analysis_out");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return cmd_run(scenarioPath, seedSet ? std::optional<std::uint64_t>(seed) : std::nullopt,
                           outDir);
        }
        if (experiment->parsed()) {
            return cmd_experiment(scenarioPath, seed, replications, jobs, outDir, !noTrialLogs);
        }
        if (analyze->parsed()) {
            return cmd_analyze(indicatorsPath, outDir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
