#pragma once

// Experiment configuration and the pipeline stages driven by the command
// line tool. Every stage returns a JSON report whose "assertions" array
// lists the hard inequalities it checked.

#include <string>
#include <vector>

#include "json.hpp"
#include "pcme/caloric.hpp"
#include "pcme/pargeo.hpp"

namespace pcme {

struct CoronaSpec {
    std::string kind = "single";  // single | layered | all_bad
    int depth = 2;                // layered
    bool perturb = false;         // regime graph = E plus a small wiggle
    double perturb_amp = 0.002;
};

struct SolveSpec {
    Box box{0.0, 1.0, {-1.0, 0.0}, {1.5, 0.0}, 1};
    int side = 1;
    DataSpec data;
    int substeps = 0;
};

struct ExperimentConfig {
    GraphSpec graph;
    double eta = 1.0 / 16;
    std::vector<double> alphas{7.0 / 8.0, 31.0 / 32.0};
    int k_min = 1, k_max = 3;
    Box cube_region{0.25, 0.75, {}, {}, 0};
    CoronaSpec corona;
    std::vector<double> resolutions;  // empty: graph.delta only
    SolveSpec solve;
    std::vector<ParaPoint> cme_centers;  // base points; empty: drawn with the seed
    std::vector<double> cme_radii{0.25, 0.3, 0.35, 0.4, 0.45};
    std::vector<ParaPoint> bmo_centers;  // base points for nu; empty: three along the cube region
    std::vector<double> bmo_rhos{0.125, 0.1875, 0.25};
    std::string h_kind = "half_stopping";  // constant | distance | half_stopping
    double whitney_root = 0.25;
    int whitney_depth = 5;
    int lift_lattice = 24;
    int lift_depth = 6;
    double M0 = 4.0;
    unsigned seed = 7;
};

/// Parses and validates a configuration. Unknown fields, wrong types and
/// violated invariants throw ConfigError naming the field; malformed JSON
/// throws ConfigError with its line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& c);

const std::vector<std::string>& stage_names();

/// Runs one stage ("all" runs every stage) and returns its report. CSV
/// tables go to `out_dir` when it is non-empty.
nlohmann::json run_stage(const std::string& stage, const ExperimentConfig& config, const std::string& out_dir = {});

/// True when every assertion of the report (and of nested stage reports) passed.
bool report_passed(const nlohmann::json& report);

/// Relative drift |a - b| / max(|a|, |b|) for every floating-point leaf
/// present in both reports; integer counts are skipped. Throws ConfigError when the experiments differ in
/// anything but resolution.
nlohmann::json compare_reports(const nlohmann::json& a, const nlohmann::json& b);

}  // namespace pcme
