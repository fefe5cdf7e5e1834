#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = DELAYSTAB_CLI_PATH;

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("delaystab_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args, const fs::path& stderr_file = {}) {
    std::string cmd = kCli + " " + args;
    cmd += stderr_file.empty() ? " 2>/dev/null" : " 2>" + stderr_file.string();
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

void write_file(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << body;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

json read_json(const fs::path& path) { return json::parse(read_file(path)); }

/// Rows of a CSV artifact: metadata comment stripped, header row first.
std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool saw_metadata = false;
    while (std::getline(in, line)) {
        if (line.rfind("# delaystab ", 0) == 0) {
            saw_metadata = true;
            continue;
        }
        std::vector<std::string> cells;
        std::istringstream fields(line);
        std::string cell;
        while (std::getline(fields, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    REQUIRE(saw_metadata);
    REQUIRE(!rows.empty());
    return rows;
}

json triangle_config(const std::string& outdir) {
    json config;
    config["gains"]["p0"] = {6.0, 0.0, 0.3, 0.0};
    config["gains"]["pbar"] = {3.0, 3.0, -0.5, 0.0};
    config["topology"]["adjacency"] = {{0.0, 2.0, 1.0}, {2.0, 0.0, 1.0}, {2.0, 1.0, 0.0}};
    config["delay"]["tau"] = 4.5;
    config["output"]["directory"] = outdir;
    return config;
}

}  // namespace

TEST_CASE("cli rejects missing subcommand, bad files and schema violations") {
    const fs::path dir = fresh_dir("schema");
    CHECK(run("") == 2);
    CHECK(run("classify " + (dir / "missing.json").string()) == 2);

    write_file(dir / "broken.json", "{not json");
    CHECK(run("classify " + (dir / "broken.json").string()) == 2);

    json config = triangle_config((dir / "out").string());
    config["clasify"] = json::object();
    write_file(dir / "unknown.json", config.dump());
    const fs::path err = dir / "err.txt";
    CHECK(run("classify " + (dir / "unknown.json").string(), err) == 2);
    CHECK(read_file(err).find("clasify") != std::string::npos);

    config.erase("clasify");
    config["classify"]["tolerance"] = -1.0;
    write_file(dir / "range.json", config.dump());
    CHECK(run("classify " + (dir / "range.json").string(), err) == 2);
    CHECK(read_file(err).find("classify.tolerance") != std::string::npos);

    config["classify"].erase("tolerance");
    config["gains"]["p0"] = {6.0, 0.0, 0.3};
    write_file(dir / "short.json", config.dump());
    CHECK(run("classify " + (dir / "short.json").string(), err) == 2);
    CHECK(read_file(err).find("gains.p0") != std::string::npos);

    write_file(dir / "ok.json", triangle_config((dir / "out").string()).dump());
    CHECK(run("classify " + (dir / "ok.json").string() + " --set delay.tau=-2", err) == 2);
    CHECK(read_file(err).find("delay.tau") != std::string::npos);
}

TEST_CASE("cli classify writes the mode table and metadata") {
    const fs::path dir = fresh_dir("classify");
    write_file(dir / "config.json", triangle_config((dir / "out").string()).dump());
    REQUIRE(run("classify " + (dir / "config.json").string()) == 0);

    const json report = read_json(dir / "out" / "classify_report.json");
    REQUIRE(report["modes"].size() == 3);
    CHECK(report["modes"][0]["lambda"] == 0.0);
    CHECK(report["modes"][0]["class"] == "II");
    CHECK(report["modes"][0]["switching"]["destabilizing"].size() >= 2);
    CHECK(report["modes"][1]["lambda"] == 4.0);
    CHECK(report["modes"][2]["lambda"] == 5.0);
    CHECK(report["composition"]["class_ii"] == 1);
    CHECK(report["metadata"]["tool"] == "delaystab");

    const json metadata = read_json(dir / "out" / "metadata.json");
    CHECK(metadata["command"] == "classify");
    CHECK(metadata["config_hash"] == report["metadata"]["config_hash"]);
    CHECK(metadata["config"]["gains"]["pbar"] == json({3.0, 3.0, -0.5, 0.0}));
}

TEST_CASE("cli spectrum reports only decaying roots for slow oscillator gains") {
    const fs::path dir = fresh_dir("spectrum");
    json config;
    config["gains"]["p0"] = {2.0, 3.0, 1.5, 1.2};
    config["delay"]["tau"] = 20.0;
    config["output"]["directory"] = (dir / "out").string();
    write_file(dir / "config.json", config.dump());
    REQUIRE(run("spectrum " + (dir / "config.json").string()) == 0);

    const auto rows = read_csv(dir / "out" / "spectrum_roots.csv");
    REQUIRE(rows[0] == std::vector<std::string>{"re_mu", "im_mu", "residual"});
    REQUIRE(rows.size() > 10);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(std::stod(rows[i][0]) < 0.0);

    const json report = read_json(dir / "out" / "spectrum_report.json");
    CHECK(report["lambda_max"].get<double>() < 0.0);
    CHECK(report["root_count"] == rows.size() - 1);
}

TEST_CASE("cli acs samples the curve and surfaces crossing frequencies") {
    const fs::path dir = fresh_dir("acs");
    json config;
    config["gains"]["p0"] = {6.0, 0.0, 0.3, 0.0};
    config["delay"]["tau"] = 4.5;
    config["acs"] = {{"omega_min", -5.0}, {"omega_max", 5.0}, {"count", 201}};
    config["output"]["directory"] = (dir / "out").string();
    write_file(dir / "config.json", config.dump());
    REQUIRE(run("acs " + (dir / "config.json").string()) == 0);

    const auto rows = read_csv(dir / "out" / "acs_samples.csv");
    REQUIRE(rows[0] == std::vector<std::string>{"omega", "gamma", "re_Y", "im_Y"});
    CHECK(rows.size() == 202);
    const json report = read_json(dir / "out" / "acs_report.json");
    REQUIRE(report["crossings"].is_object());
    CHECK(report["crossings"]["frequencies"].size() == 2);
}

TEST_CASE("cli acs propagates numerical failure as exit 3") {
    const fs::path dir = fresh_dir("acs_fail");
    json config;
    config["gains"]["p0"] = {3.0, 6.0, 0.0, 0.0};
    config["delay"]["tau"] = 5.0;
    config["acs"]["count"] = 11;
    config["output"]["directory"] = (dir / "out").string();
    write_file(dir / "config.json", config.dump());
    CHECK(run("acs " + (dir / "config.json").string()) == 3);
}

TEST_CASE("cli bifurcation writes one curve file per contour level") {
    const fs::path dir = fresh_dir("bifurcation");
    json config;
    config["gains"]["p0"] = {0.0, 6.0, 1.5, 3.0};
    config["gains"]["pbar"] = {3.0, 1.0, 0.0, 0.0};
    config["delay"]["tau"] = 10.0;
    config["bifurcation"] = {{"plane", "lambda_plane"},
                             {"levels", {-0.1, 0.0, 0.1}},
                             {"omega", {{"min", -3.0}, {"max", 3.0}, {"count", 301}}}};
    config["output"]["directory"] = (dir / "out").string();
    write_file(dir / "config.json", config.dump());
    REQUIRE(run("bifurcation " + (dir / "config.json").string()) == 0);

    const json report = read_json(dir / "out" / "bifurcation_report.json");
    REQUIRE(report["curves"].size() == 3);
    for (int i = 0; i < 3; ++i) {
        const fs::path file = dir / "out" / ("curve_" + std::to_string(i) + ".csv");
        const auto rows = read_csv(file);
        CHECK(rows[0] == std::vector<std::string>{"omega", "re_point", "im_point", "level",
                                                  "segment_id"});
        CHECK(rows.size() > 1);
    }
    CHECK(report["curves"][1]["level"] == 0.0);
}

TEST_CASE("cli msf skips the lattice on request and keeps the asymptote") {
    const fs::path dir = fresh_dir("msf");
    json config;
    config["gains"]["p0"] = {3.0, 6.0, 0.0, 0.0};
    config["gains"]["pbar"] = {0.0, 0.0, -2.0, 0.0};
    config["delay"]["tau"] = 1000.0;
    config["msf"]["field"] = false;
    config["output"]["directory"] = (dir / "out").string();
    write_file(dir / "config.json", config.dump());
    REQUIRE(run("msf " + (dir / "config.json").string()) == 0);

    CHECK(!fs::exists(dir / "out" / "msf_field.csv"));
    const json report = read_json(dir / "out" / "msf_report.json");
    CHECK(report["field_computed"] == false);
    CHECK(report["asymptote"]["applicable"] == true);
    CHECK(report["asymptote"]["lambda0_re"] == 1.5);
    CHECK(report["asymptote"]["slope"] == -2.0);

    const auto rows = read_csv(dir / "out" / "msf_asymptote.csv");
    REQUIRE(rows[0][3] == "radius");
    REQUIRE(rows.size() == 202);
    for (std::size_t i = 1; i < rows.size(); ++i)
        CHECK(std::abs(std::stod(rows[i][3]) - 1.5) <= 0.02);
}

TEST_CASE("cli msf computes field, region and boundary on a small grid") {
    const fs::path dir = fresh_dir("msf_field");
    json config;
    config["gains"]["p0"] = {3.0, 6.0, 0.0, 0.0};
    config["gains"]["pbar"] = {0.0, 0.0, -2.0, 0.0};
    config["delay"]["tau"] = 5.0;
    config["msf"]["grid"] = {{"re_min", -2.0}, {"re_max", 2.0}, {"im_min", -2.0},
                             {"im_max", 2.0},  {"spacing", 0.25}};
    config["msf"]["asymptote"] = false;
    config["output"]["directory"] = (dir / "out").string();
    write_file(dir / "config.json", config.dump());
    REQUIRE(run("msf " + (dir / "config.json").string()) == 0);

    const json report = read_json(dir / "out" / "msf_report.json");
    CHECK(report["nx"] == 17);
    CHECK(report["ny"] == 17);
    CHECK(report["no_stable_seed"] == false);
    CHECK(report["region_nodes"].get<std::size_t>() > 0);
    CHECK(report["asymptote"].is_null());

    const auto rows = read_csv(dir / "out" / "msf_field.csv");
    CHECK(rows[0] ==
          std::vector<std::string>{"re_lambda", "im_lambda", "lambda_max", "in_region"});
    CHECK(rows.size() == 17 * 17 + 1);
    CHECK(read_csv(dir / "out" / "msf_boundary.csv").size() > 1);
}

TEST_CASE("cli simulate writes thinned trajectories and a decay fit") {
    const fs::path dir = fresh_dir("simulate");
    json config;
    config["gains"]["p0"] = {6.0, 0.0, 0.3, 0.0};
    config["topology"]["adjacency"] = {{0.0, 0.0}, {0.0, 0.0}};
    config["delay"]["tau"] = 4.5;
    config["simulate"] = {{"offsets", {{0.0, -10.0, 0.0}, {20.0, 10.0, 0.0}}},
                          {"t_end", 60.0},
                          {"stride", 5},
                          {"fit_window", {20.0, 50.0}}};
    config["output"]["directory"] = (dir / "out").string();
    write_file(dir / "config.json", config.dump());
    REQUIRE(run("simulate " + (dir / "config.json").string()) == 0);

    const json report = read_json(dir / "out" / "simulate_report.json");
    CHECK(report["agents"] == 2);
    CHECK(report["diverged"] == false);
    CHECK(report["divergence_time"].is_null());
    CHECK(report["samples"] == 6001);
    CHECK(report["written_samples"] == 1201);
    CHECK(report["decay_rate"].get<double>() < -0.05);

    const auto summary = read_csv(dir / "out" / "summary.csv");
    CHECK(summary[0] == std::vector<std::string>{"t", "tracking_error", "formation_error"});
    CHECK(summary.size() == 1202);
    const auto trajectory = read_csv(dir / "out" / "trajectory.csv");
    CHECK(trajectory[0] == std::vector<std::string>{"t", "agent_id", "x", "y", "z", "vx", "vy",
                                                    "vz"});
    CHECK(trajectory.size() == 2 * 1201 + 1);
}

TEST_CASE("cli reruns are byte identical and overrides land in the resolved config") {
    const fs::path dir = fresh_dir("determinism");
    json config = triangle_config((dir / "out").string());
    write_file(dir / "config.json", config.dump());
    const std::string cmd = "classify " + (dir / "config.json").string();

    REQUIRE(run(cmd) == 0);
    const std::string report_a = read_file(dir / "out" / "classify_report.json");
    const std::string metadata_a = read_file(dir / "out" / "metadata.json");
    fs::remove_all(dir / "out");
    REQUIRE(run(cmd) == 0);
    CHECK(read_file(dir / "out" / "classify_report.json") == report_a);
    CHECK(read_file(dir / "out" / "metadata.json") == metadata_a);

    REQUIRE(run(cmd + " --set delay.tau=5.7") == 0);
    const json metadata = read_json(dir / "out" / "metadata.json");
    CHECK(metadata["config"]["delay"]["tau"] == 5.7);
    CHECK(metadata["config_hash"] != json::parse(metadata_a)["config_hash"]);
}

TEST_CASE("cli resolved config from metadata re-validates unchanged") {
    const fs::path dir = fresh_dir("roundtrip");
    write_file(dir / "config.json", triangle_config((dir / "out").string()).dump());
    REQUIRE(run("classify " + (dir / "config.json").string()) == 0);

    const json resolved = read_json(dir / "out" / "metadata.json")["config"];
    write_file(dir / "resolved.json", resolved.dump());
    REQUIRE(run("classify " + (dir / "resolved.json").string()) == 0);
    const json again = read_json(dir / "out" / "metadata.json");
    CHECK(again["config"] == resolved);
}
