#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pcme/error.hpp"
#include "pcme/experiment.hpp"
#include "pcme/parallel.hpp"

using nlohmann::json;

namespace {

struct Options {
    std::string config;
    std::string stage;
    std::string out = "pcme_out";
    unsigned jobs = 0;
    int seed = -1;
    std::string graph;
    std::string data;
    double delta = 0.0;
    std::vector<std::string> reports;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw pcme::ConfigError("cannot read " + path);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

pcme::ExperimentConfig make_config(const Options& o) {
    std::string text = o.config.empty() ? "{}" : slurp(o.config);
    pcme::parse_config(text);  // diagnostics refer to the file as written
    json j = json::parse(text);
    if (!o.graph.empty()) j["graph"]["kind"] = o.graph;
    if (o.delta > 0.0) j["graph"]["delta"] = o.delta;
    if (!o.data.empty()) j["solve"]["data"]["kind"] = o.data;
    if (o.seed >= 0) j["seed"] = o.seed;
    return pcme::parse_config(j.dump());
}

void write_report(const std::string& dir, const std::string& name, const json& report) {
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / (name + ".json"));
    out << report.dump(2) << '\n';
}

void list_failures(const json& j, const std::string& path) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (it.key() == "assertions" && it.value().is_array()) {
                for (const json& a : it.value())
                    if (!a.value("pass", true)) std::cout << "  FAILED " << path << ": " << a.value("name", "?") << '\n';
            } else {
                list_failures(it.value(), path.empty() ? it.key() : path + "/" + it.key());
            }
        }
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) list_failures(j[i], path + "/" + std::to_string(i));
    }
}

int run(const std::string& stage, const Options& o) {
    const pcme::ExperimentConfig config = make_config(o);
    pcme::set_max_jobs(o.jobs);
    const json report = pcme::run_stage(stage, config, o.out);
    write_report(o.out, stage, report);
    const bool pass = report["pass"].get<bool>();
    std::cout << stage << ": " << (pass ? "pass" : "FAIL") << " -> " << (std::filesystem::path(o.out) / (stage + ".json")).string()
              << '\n';
    if (!pass) list_failures(report, "");
    return pass ? 0 : 1;
}

int compare(const Options& o) {
    const json a = json::parse(slurp(o.reports.at(0)));
    const json b = json::parse(slurp(o.reports.at(1)));
    const json drift = pcme::compare_reports(a, b);
    write_report(o.out, "compare", drift);
    std::cout << "max relative drift " << drift["max"].get<double>() << '\n';
    return 0;
}

void add_common(CLI::App* app, Options& o) {
    app->add_option("--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    app->add_option("--out", o.out, "output directory for reports and CSV tables");
    app->add_option("--jobs", o.jobs, "worker thread cap (0 = hardware)");
    app->add_option("--seed", o.seed, "seed for randomized sweeps");
    app->add_option("--graph", o.graph, "graph kind override (flat, sine, multiscale)");
    app->add_option("--data", o.data, "data kind override (constant, linear, quadratic, step)");
    app->add_option("--delta", o.delta, "grid resolution override");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parabolic Carleson measure experiments"};
    app.require_subcommand(1);
    Options o;

    std::vector<std::string> stages = pcme::stage_names();
    stages.push_back("all");
    for (const std::string& s : stages) add_common(app.add_subcommand(s, "run the " + s + " stage"), o);

    CLI::App* run_cmd = app.add_subcommand("run", "run the stage named by --stage");
    add_common(run_cmd, o);
    run_cmd->add_option("--stage", o.stage, "stage name")->required()->check(CLI::IsMember(stages));

    CLI::App* cmp = app.add_subcommand("compare", "relative drift between two reports");
    cmp->add_option("reports", o.reports, "two report files")->required()->expected(2)->check(CLI::ExistingFile);
    cmp->add_option("--out", o.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        if (sub == cmp) return compare(o);
        return run(sub == run_cmd ? o.stage : sub->get_name(), o);
    } catch (const pcme::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "report error: " << e.what() << '\n';
        return 2;
    } catch (const pcme::AssertionFailure& e) {
        std::cerr << "assertion failed: " << e.what() << '\n';
        return 1;
    } catch (const pcme::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
