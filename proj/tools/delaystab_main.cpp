#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "CLI11.hpp"
#include "delaystab/bifurcation.hpp"
#include "delaystab/classify.hpp"
#include "delaystab/errors.hpp"
#include "delaystab/gains.hpp"
#include "delaystab/msf.hpp"
#include "delaystab/simulate.hpp"
#include "delaystab/spectrum.hpp"
#include "delaystab/topology.hpp"
#include "json.hpp"

namespace {

using delaystab::cplx;
using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kToolVersion = "0.1.0";

/// Configuration rejected before dispatch; carries the offending field path.
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw SchemaError(path + ": " + what);
}

// ---- schema helpers ----------------------------------------------------------

void check_keys(const json& node, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (const auto& item : node.items()) {
        bool known = false;
        for (const char* key : allowed)
            if (item.key() == key) known = true;
        if (!known) fail(path.empty() ? item.key() : path + "." + item.key(), "unknown key");
    }
}

const json* find(const json& node, const char* key) {
    const auto it = node.find(key);
    return it == node.end() ? nullptr : &*it;
}

double as_number(const json& node, const std::string& path) {
    if (!node.is_number()) fail(path, "expected a number");
    return node.get<double>();
}

double number_or(const json& node, const std::string& path, const char* key, double fallback) {
    const json* value = find(node, key);
    return value ? as_number(*value, path + "." + key) : fallback;
}

long as_integer(const json& node, const std::string& path) {
    const double value = as_number(node, path);
    if (value != std::floor(value) || std::abs(value) > 1e15) fail(path, "expected an integer");
    return static_cast<long>(value);
}

bool bool_or(const json& node, const std::string& path, const char* key, bool fallback) {
    const json* value = find(node, key);
    if (!value) return fallback;
    if (!value->is_boolean()) fail(path + "." + key, "expected a boolean");
    return value->get<bool>();
}

std::string string_or(const json& node, const std::string& path, const char* key,
                      const std::string& fallback) {
    const json* value = find(node, key);
    if (!value) return fallback;
    if (!value->is_string()) fail(path + "." + key, "expected a string");
    return value->get<std::string>();
}

std::vector<double> as_number_array(const json& node, const std::string& path, long length) {
    if (!node.is_array()) fail(path, "expected an array");
    if (length >= 0 && static_cast<long>(node.size()) != length)
        fail(path, "expected exactly " + std::to_string(length) + " entries");
    std::vector<double> values;
    values.reserve(node.size());
    for (std::size_t i = 0; i < node.size(); ++i)
        values.push_back(as_number(node[i], path + "[" + std::to_string(i) + "]"));
    return values;
}

json object_or_empty(const json& node, const std::string& path, const char* key) {
    const json* value = find(node, key);
    if (!value || value->is_null()) return json::object();
    if (!value->is_object()) fail(path.empty() ? key : path + "." + std::string(key),
                                  "expected an object");
    return *value;
}

// ---- section resolvers ---------------------------------------------------------

json resolve_gains(const json& raw) {
    const json* section = find(raw, "gains");
    if (!section) fail("gains", "required section is missing");
    if (!section->is_object()) fail("gains", "expected an object");
    check_keys(*section, "gains", {"p0", "pbar"});
    const json* p0 = find(*section, "p0");
    if (!p0) fail("gains.p0", "required key is missing");
    json resolved;
    resolved["p0"] = as_number_array(*p0, "gains.p0", 4);
    const json* pbar = find(*section, "pbar");
    resolved["pbar"] =
        pbar ? as_number_array(*pbar, "gains.pbar", 4) : std::vector<double>{0.0, 0.0, 0.0, 0.0};
    return resolved;
}

json resolve_topology(const json& raw) {
    const json section = object_or_empty(raw, "", "topology");
    check_keys(section, "topology", {"adjacency"});
    json resolved;
    const json* adjacency = find(section, "adjacency");
    if (!adjacency) {
        resolved["adjacency"] = json::array({json::array({0.0})});
        return resolved;
    }
    if (!adjacency->is_array() || adjacency->empty())
        fail("topology.adjacency", "expected a nonempty array of rows");
    const long n = static_cast<long>(adjacency->size());
    json rows = json::array();
    for (long i = 0; i < n; ++i)
        rows.push_back(as_number_array((*adjacency)[static_cast<std::size_t>(i)],
                                       "topology.adjacency[" + std::to_string(i) + "]", n));
    resolved["adjacency"] = rows;
    return resolved;
}

json resolve_delay(const json& raw) {
    const json* section = find(raw, "delay");
    if (!section) fail("delay", "required section is missing");
    if (!section->is_object()) fail("delay", "expected an object");
    check_keys(*section, "delay", {"tau"});
    const json* tau = find(*section, "tau");
    if (!tau) fail("delay.tau", "required key is missing");
    const double value = as_number(*tau, "delay.tau");
    if (!std::isfinite(value) || value < 0.0) fail("delay.tau", "must be finite and >= 0");
    return json{{"tau", value}};
}

json resolve_output(const json& raw) {
    const json section = object_or_empty(raw, "", "output");
    check_keys(section, "output", {"directory", "format"});
    json resolved;
    resolved["directory"] = string_or(section, "output", "directory", ".");
    const std::string format = string_or(section, "output", "format", "csv");
    if (format != "csv") fail("output.format", "only \"csv\" is supported");
    resolved["format"] = format;
    return resolved;
}

json resolve_classify(const json& raw) {
    const json section = object_or_empty(raw, "", "classify");
    check_keys(section, "classify", {"tolerance", "switching_horizon"});
    json resolved;
    resolved["tolerance"] = number_or(section, "classify", "tolerance", 1e-9);
    resolved["switching_horizon"] = number_or(section, "classify", "switching_horizon", 30.0);
    if (!(resolved["tolerance"].get<double>() > 0.0)) fail("classify.tolerance", "must be > 0");
    if (!(resolved["switching_horizon"].get<double>() > 0.0))
        fail("classify.switching_horizon", "must be > 0");
    return resolved;
}

json resolve_acs(const json& raw) {
    const json section = object_or_empty(raw, "", "acs");
    check_keys(section, "acs", {"lambda", "omega_min", "omega_max", "count"});
    json resolved;
    resolved["lambda"] = number_or(section, "acs", "lambda", 0.0);
    resolved["omega_min"] = number_or(section, "acs", "omega_min", -10.0);
    resolved["omega_max"] = number_or(section, "acs", "omega_max", 10.0);
    const json* count = find(section, "count");
    resolved["count"] = count ? as_integer(*count, "acs.count") : 2001;
    if (resolved["count"].get<long>() < 2) fail("acs.count", "must be >= 2");
    if (!(resolved["omega_min"].get<double>() < resolved["omega_max"].get<double>()))
        fail("acs.omega_min", "must be < acs.omega_max");
    return resolved;
}

json resolve_spectrum(const json& raw, double tau) {
    const json section = object_or_empty(raw, "", "spectrum");
    check_keys(section, "spectrum", {"lambda", "window"});
    json resolved;
    resolved["lambda"] = number_or(section, "spectrum", "lambda", 0.0);
    const delaystab::RootWindow fallback = delaystab::default_root_window(tau);
    const json window = object_or_empty(section, "spectrum", "window");
    check_keys(window, "spectrum.window", {"re_min", "re_max", "im_max"});
    json resolved_window;
    resolved_window["re_min"] = number_or(window, "spectrum.window", "re_min", fallback.re_min);
    resolved_window["re_max"] = number_or(window, "spectrum.window", "re_max", fallback.re_max);
    resolved_window["im_max"] = number_or(window, "spectrum.window", "im_max", fallback.im_max);
    if (!(resolved_window["re_min"].get<double>() < resolved_window["re_max"].get<double>()))
        fail("spectrum.window.re_min", "must be < spectrum.window.re_max");
    if (!(resolved_window["im_max"].get<double>() > 0.0))
        fail("spectrum.window.im_max", "must be > 0");
    resolved["window"] = resolved_window;
    return resolved;
}

json resolve_bifurcation(const json& raw) {
    const json section = object_or_empty(raw, "", "bifurcation");
    check_keys(section, "bifurcation", {"plane", "levels", "omega"});
    json resolved;
    const std::string plane = string_or(section, "bifurcation", "plane", "k0h0");
    if (plane != "k0h0" && plane != "lambda_h0" && plane != "lambda_plane")
        fail("bifurcation.plane", "expected \"k0h0\", \"lambda_h0\" or \"lambda_plane\"");
    resolved["plane"] = plane;
    const json* levels = find(section, "levels");
    resolved["levels"] = levels ? json(as_number_array(*levels, "bifurcation.levels", -1))
                                : json(std::vector<double>{0.0});
    if (resolved["levels"].empty()) fail("bifurcation.levels", "must not be empty");
    const json omega = object_or_empty(section, "bifurcation", "omega");
    check_keys(omega, "bifurcation.omega", {"min", "max", "count"});
    if (omega.empty()) {
        resolved["omega"] = nullptr;
    } else {
        json resolved_omega;
        resolved_omega["min"] = number_or(omega, "bifurcation.omega", "min", -10.0);
        resolved_omega["max"] = number_or(omega, "bifurcation.omega", "max", 10.0);
        const json* count = find(omega, "count");
        resolved_omega["count"] = count ? as_integer(*count, "bifurcation.omega.count") : 1001;
        if (resolved_omega["count"].get<long>() < 2) fail("bifurcation.omega.count", "must be >= 2");
        if (!(resolved_omega["min"].get<double>() < resolved_omega["max"].get<double>()))
            fail("bifurcation.omega.min", "must be < bifurcation.omega.max");
        resolved["omega"] = resolved_omega;
    }
    return resolved;
}

json resolve_msf(const json& raw) {
    const json section = object_or_empty(raw, "", "msf");
    check_keys(section, "msf", {"grid", "omega_tau_window", "asymptote", "field"});
    json resolved;
    const delaystab::GridSpec fallback;
    const json grid = object_or_empty(section, "msf", "grid");
    check_keys(grid, "msf.grid", {"re_min", "re_max", "im_min", "im_max", "spacing"});
    json resolved_grid;
    resolved_grid["re_min"] = number_or(grid, "msf.grid", "re_min", fallback.re_min);
    resolved_grid["re_max"] = number_or(grid, "msf.grid", "re_max", fallback.re_max);
    resolved_grid["im_min"] = number_or(grid, "msf.grid", "im_min", fallback.im_min);
    resolved_grid["im_max"] = number_or(grid, "msf.grid", "im_max", fallback.im_max);
    resolved_grid["spacing"] = number_or(grid, "msf.grid", "spacing", fallback.spacing);
    if (!(resolved_grid["spacing"].get<double>() > 0.0)) fail("msf.grid.spacing", "must be > 0");
    resolved["grid"] = resolved_grid;
    resolved["omega_tau_window"] =
        number_or(section, "msf", "omega_tau_window", 6.283185307179586);
    if (!(resolved["omega_tau_window"].get<double>() > 0.0))
        fail("msf.omega_tau_window", "must be > 0");
    resolved["asymptote"] = bool_or(section, "msf", "asymptote", true);
    resolved["field"] = bool_or(section, "msf", "field", true);
    return resolved;
}

json resolve_simulate(const json& raw, long agents) {
    const json section = object_or_empty(raw, "", "simulate");
    check_keys(section, "simulate",
               {"offsets", "trajectory", "t_end", "dt", "history", "history_scale",
                "history_offsets", "stride", "fit_window"});
    json resolved;

    const auto rows_matrix = [&](const json& node, const std::string& path) {
        if (!node.is_array() || static_cast<long>(node.size()) != agents)
            fail(path, "expected one row of 3 numbers per agent (" + std::to_string(agents) +
                           " rows)");
        json rows = json::array();
        for (long i = 0; i < agents; ++i)
            rows.push_back(as_number_array(node[static_cast<std::size_t>(i)],
                                           path + "[" + std::to_string(i) + "]", 3));
        return rows;
    };

    const json* offsets = find(section, "offsets");
    if (offsets) {
        resolved["offsets"] = rows_matrix(*offsets, "simulate.offsets");
    } else {
        json rows = json::array();
        for (long i = 0; i < agents; ++i) rows.push_back(json::array({0.0, 0.0, 0.0}));
        resolved["offsets"] = rows;
    }

    const json* trajectory = find(section, "trajectory");
    if (trajectory) {
        if (!trajectory->is_array() || trajectory->size() != 3)
            fail("simulate.trajectory", "expected 3 axis coefficient arrays");
        json axes = json::array();
        for (std::size_t axis = 0; axis < 3; ++axis) {
            const std::string path = "simulate.trajectory[" + std::to_string(axis) + "]";
            const json& row = (*trajectory)[axis];
            if (!row.is_array() || row.empty() || row.size() > 5)
                fail(path, "expected 1 to 5 polynomial coefficients");
            std::vector<double> padded(5, 0.0);
            for (std::size_t p = 0; p < row.size(); ++p)
                padded[p] = as_number(row[p], path + "[" + std::to_string(p) + "]");
            axes.push_back(padded);
        }
        resolved["trajectory"] = axes;
    } else {
        const delaystab::TrajectorySpec fallback = delaystab::default_trajectory();
        json axes = json::array();
        for (const auto& axis : fallback.coefficients)
            axes.push_back(std::vector<double>(axis.begin(), axis.end()));
        resolved["trajectory"] = axes;
    }

    resolved["t_end"] = number_or(section, "simulate", "t_end", 300.0);
    resolved["dt"] = number_or(section, "simulate", "dt", 0.0);
    if (!(resolved["t_end"].get<double>() > 0.0)) fail("simulate.t_end", "must be > 0");
    if (resolved["dt"].get<double>() < 0.0) fail("simulate.dt", "must be >= 0");

    const std::string history = string_or(section, "simulate", "history", "perturbed_rest");
    if (history != "perturbed_rest" && history != "on_target")
        fail("simulate.history", "expected \"perturbed_rest\" or \"on_target\"");
    resolved["history"] = history;
    resolved["history_scale"] = number_or(section, "simulate", "history_scale", 1.0);

    const json* history_offsets = find(section, "history_offsets");
    resolved["history_offsets"] =
        history_offsets && !history_offsets->is_null()
            ? rows_matrix(*history_offsets, "simulate.history_offsets")
            : json();

    const json* stride = find(section, "stride");
    resolved["stride"] = stride ? as_integer(*stride, "simulate.stride") : 1;
    if (resolved["stride"].get<long>() < 1) fail("simulate.stride", "must be >= 1");

    const json* fit_window = find(section, "fit_window");
    if (fit_window && !fit_window->is_null()) {
        const std::vector<double> window = as_number_array(*fit_window, "simulate.fit_window", 2);
        if (!(window[0] < window[1])) fail("simulate.fit_window", "start must be < end");
        resolved["fit_window"] = window;
    } else {
        resolved["fit_window"] = json();
    }
    return resolved;
}

/// Validate the raw document and fill every default. The result is
/// self-contained: resolving it again is the identity.
json resolve_config(const json& raw) {
    if (!raw.is_object()) fail("<root>", "expected a JSON object");
    check_keys(raw, "",
               {"gains", "topology", "delay", "output", "classify", "acs", "spectrum",
                "bifurcation", "msf", "simulate"});
    json resolved;
    resolved["gains"] = resolve_gains(raw);
    resolved["topology"] = resolve_topology(raw);
    resolved["delay"] = resolve_delay(raw);
    resolved["output"] = resolve_output(raw);
    resolved["classify"] = resolve_classify(raw);
    resolved["acs"] = resolve_acs(raw);
    resolved["spectrum"] = resolve_spectrum(raw, resolved["delay"]["tau"].get<double>());
    resolved["bifurcation"] = resolve_bifurcation(raw);
    resolved["msf"] = resolve_msf(raw);
    resolved["simulate"] =
        resolve_simulate(raw, static_cast<long>(resolved["topology"]["adjacency"].size()));
    return resolved;
}

// ---- config -> library types ----------------------------------------------------

delaystab::GainVector config_p0(const json& resolved) {
    const auto& p = resolved["gains"]["p0"];
    return {p[0].get<double>(), p[1].get<double>(), p[2].get<double>(), p[3].get<double>()};
}

delaystab::CouplingGainVector config_pbar(const json& resolved) {
    const auto& p = resolved["gains"]["pbar"];
    return {p[0].get<double>(), p[1].get<double>(), p[2].get<double>(), p[3].get<double>()};
}

Eigen::MatrixXd config_matrix(const json& rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto m = static_cast<Eigen::Index>(rows[0].size());
    Eigen::MatrixXd matrix(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            matrix(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
                               .get<double>();
    return matrix;
}

// ---- artifact plumbing -----------------------------------------------------------

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t hash = 1469598103934665603ull;
    for (const unsigned char c : text) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

std::string format_double(double value) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

struct RunContext {
    std::string command;
    json resolved;
    std::string config_hash;
    fs::path directory;

    [[nodiscard]] std::string csv_header() const {
        return "# delaystab " + std::string(kToolVersion) + " command=" + command +
               " config_hash=" + config_hash + "\n";
    }

    [[nodiscard]] json metadata() const {
        json meta;
        meta["tool"] = "delaystab";
        meta["version"] = kToolVersion;
        meta["command"] = command;
        meta["config_hash"] = config_hash;
        return meta;
    }

    void write_text(const std::string& name, const std::string& body) const {
        const fs::path path = directory / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
        out << body;
        if (!out) throw std::runtime_error("failed writing " + path.string());
    }

    void write_csv(const std::string& name, const std::string& body) const {
        write_text(name, csv_header() + body);
    }

    void write_report(const std::string& name, json report) const {
        report["metadata"] = metadata();
        write_text(name, report.dump(2) + "\n");
    }
};

RunContext make_context(const std::string& command, json resolved) {
    RunContext context;
    context.command = command;
    context.config_hash = [&resolved] {
        char buffer[17];
        std::snprintf(buffer, sizeof(buffer), "%016llx",
                      static_cast<unsigned long long>(fnv1a64(resolved.dump())));
        return std::string(buffer);
    }();
    context.directory = resolved["output"]["directory"].get<std::string>();
    context.resolved = std::move(resolved);
    fs::create_directories(context.directory);
    json meta = context.metadata();
    meta["config"] = context.resolved;
    context.write_text("metadata.json", meta.dump(2) + "\n");
    return context;
}

// ---- subcommand implementations --------------------------------------------------

const char* class_name(delaystab::AcsClass cls) {
    switch (cls) {
        case delaystab::AcsClass::Zero: return "0";
        case delaystab::AcsClass::I: return "I";
        case delaystab::AcsClass::II: return "II";
        case delaystab::AcsClass::U: return "U";
        default: return "boundary";
    }
}

void run_classify(const RunContext& context) {
    const json& resolved = context.resolved;
    const delaystab::Topology topology =
        delaystab::topology_from_adjacency(config_matrix(resolved["topology"]["adjacency"]));
    const double tolerance = resolved["classify"]["tolerance"].get<double>();
    const double horizon = resolved["classify"]["switching_horizon"].get<double>();
    const delaystab::SpectrumComposition composition = delaystab::classify_formation(
        config_p0(resolved), config_pbar(resolved), topology, tolerance);

    json modes = json::array();
    for (const auto& [lambda, label] : composition.modes) {
        json mode;
        mode["lambda"] = lambda;
        mode["class"] = class_name(label.cls);
        mode["margin"] = label.margin;
        mode["instantaneous_unstable"] = label.instantaneous_unstable;
        mode["instantaneous_marginal"] = label.instantaneous_marginal;
        mode["sum_matrix_stable"] = label.sum_matrix_stable;
        mode["crossing"] = {{"frequencies", label.crossing.frequencies},
                            {"phases", label.crossing.phases},
                            {"degenerate_double", label.crossing.degenerate_double}};
        if (label.cls == delaystab::AcsClass::I || label.cls == delaystab::AcsClass::II) {
            const delaystab::SwitchingDelays delays = delaystab::switching_delays(label, horizon);
            mode["switching"] = {{"destabilizing", delays.destabilizing},
                                 {"stabilizing", delays.stabilizing},
                                 {"horizon", delays.horizon}};
        } else {
            mode["switching"] = nullptr;
        }
        modes.push_back(mode);
    }

    char label[96];
    std::snprintf(label, sizeof(label), "0_%zu I_%zu II_%zu U_%zu", composition.zero_modes,
                  composition.class_i_modes, composition.class_ii_modes,
                  composition.class_u_modes);
    json report;
    report["modes"] = modes;
    report["composition"] = {{"zero", composition.zero_modes},
                             {"class_i", composition.class_i_modes},
                             {"class_ii", composition.class_ii_modes},
                             {"class_u", composition.class_u_modes},
                             {"boundary", composition.boundary_modes},
                             {"label", label}};
    report["absolutely_stable"] = composition.absolutely_stable;
    report["has_class_u"] = composition.has_class_u;
    context.write_report("classify_report.json", report);
}

void run_acs(const RunContext& context) {
    const json& resolved = context.resolved;
    const json& block = resolved["acs"];
    const delaystab::ModeSystem mode =
        delaystab::mode_system(config_p0(resolved), config_pbar(resolved),
                               cplx(block["lambda"].get<double>(), 0.0),
                               resolved["delay"]["tau"].get<double>());
    const std::vector<delaystab::AcsSample> samples = delaystab::acs_samples(
        mode, block["omega_min"].get<double>(), block["omega_max"].get<double>(),
        static_cast<std::size_t>(block["count"].get<long>()));

    std::string csv = "omega,gamma,re_Y,im_Y\n";
    for (const delaystab::AcsSample& sample : samples)
        csv += format_double(sample.omega) + "," + format_double(sample.gamma) + "," +
               format_double(sample.Y.real()) + "," + format_double(sample.Y.imag()) + "\n";
    context.write_csv("acs_samples.csv", csv);

    json report;
    report["lambda"] = block["lambda"];
    report["sample_count"] = samples.size();
    try {
        const delaystab::CrossingSet crossing = delaystab::crossing_frequencies(mode);
        report["crossings"] = {{"frequencies", crossing.frequencies},
                               {"phases", crossing.phases},
                               {"degenerate_double", crossing.degenerate_double}};
    } catch (const delaystab::UnsupportedParametersError& error) {
        report["crossings"] = nullptr;
        report["crossings_error"] = error.what();
    }
    context.write_report("acs_report.json", report);
}

void run_spectrum(const RunContext& context) {
    const json& resolved = context.resolved;
    const json& block = resolved["spectrum"];
    const delaystab::ModeSystem mode =
        delaystab::mode_system(config_p0(resolved), config_pbar(resolved),
                               cplx(block["lambda"].get<double>(), 0.0),
                               resolved["delay"]["tau"].get<double>());
    const delaystab::RootWindow window{block["window"]["re_min"].get<double>(),
                                       block["window"]["re_max"].get<double>(),
                                       block["window"]["im_max"].get<double>()};
    const delaystab::SpectrumResult spectrum = delaystab::char_roots(mode, window);

    std::string csv = "re_mu,im_mu,residual\n";
    for (const delaystab::CharacteristicRoot& root : spectrum.roots)
        csv += format_double(root.mu.real()) + "," + format_double(root.mu.imag()) + "," +
               format_double(root.residual) + "\n";
    context.write_csv("spectrum_roots.csv", csv);

    json report;
    report["lambda"] = block["lambda"];
    report["tau"] = resolved["delay"]["tau"];
    report["root_count"] = spectrum.roots.size();
    report["collocation_order"] = spectrum.collocation_order;
    report["window"] = {{"re_min", spectrum.window.re_min},
                        {"re_max", spectrum.window.re_max},
                        {"im_max", spectrum.window.im_max}};
    report["lambda_max"] = delaystab::lambda_max(mode, &window);
    context.write_report("spectrum_report.json", report);
}

void run_bifurcation(const RunContext& context) {
    const json& resolved = context.resolved;
    const json& block = resolved["bifurcation"];
    const double tau = resolved["delay"]["tau"].get<double>();
    const delaystab::GainVector p0 = config_p0(resolved);
    const delaystab::CouplingGainVector pbar = config_pbar(resolved);

    std::vector<double> grid;
    if (block["omega"].is_null()) {
        grid = delaystab::default_omega_grid(tau);
    } else {
        const double lo = block["omega"]["min"].get<double>();
        const double hi = block["omega"]["max"].get<double>();
        const long count = block["omega"]["count"].get<long>();
        grid.reserve(static_cast<std::size_t>(count));
        for (long i = 0; i < count; ++i)
            grid.push_back(lo + (hi - lo) * static_cast<double>(i) /
                                    static_cast<double>(count - 1));
    }

    const std::string plane = block["plane"].get<std::string>();
    std::vector<delaystab::ParametricCurve> curves;
    if (plane == "k0h0") {
        curves.push_back(delaystab::k0h0_boundary(p0.k0_tau, p0.h0_tau, tau, grid));
    } else if (plane == "lambda_h0") {
        curves.push_back(delaystab::lambda_h0_boundary(p0, pbar, tau, grid));
    } else {
        for (const auto& level : block["levels"])
            curves.push_back(
                delaystab::contour_lines(level.get<double>(), p0, pbar, tau, grid));
    }

    json files = json::array();
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const std::string name = "curve_" + std::to_string(i) + ".csv";
        context.write_csv(name, delaystab::to_csv(curves[i]));
        files.push_back({{"file", name},
                         {"level", curves[i].level},
                         {"samples", curves[i].samples.size()},
                         {"gaps", curves[i].gaps.size()}});
    }
    json report;
    report["plane"] = plane;
    report["curves"] = files;
    context.write_report("bifurcation_report.json", report);
}

void run_msf(const RunContext& context) {
    const json& resolved = context.resolved;
    const json& block = resolved["msf"];
    const double tau = resolved["delay"]["tau"].get<double>();
    const delaystab::GainVector p0 = config_p0(resolved);
    const delaystab::CouplingGainVector pbar = config_pbar(resolved);
    const delaystab::GridSpec grid{block["grid"]["re_min"].get<double>(),
                                   block["grid"]["re_max"].get<double>(),
                                   block["grid"]["im_min"].get<double>(),
                                   block["grid"]["im_max"].get<double>(),
                                   block["grid"]["spacing"].get<double>()};

    json report;
    report["grid"] = block["grid"];
    report["field_computed"] = block["field"].get<bool>();
    if (block["field"].get<bool>()) {
        const delaystab::MsfField field = delaystab::msf_field(p0, pbar, tau, grid);
        context.write_csv("msf_field.csv", delaystab::to_csv(field));
        context.write_csv("msf_boundary.csv", delaystab::to_csv(field.boundary));

        std::size_t stable = 0;
        std::size_t region = 0;
        for (std::size_t i = 0; i < field.values.size(); ++i) {
            if (field.valid[i] && field.values[i] < 0.0) ++stable;
            if (field.region[i]) ++region;
        }
        report["nx"] = field.nx;
        report["ny"] = field.ny;
        report["no_stable_seed"] = field.no_stable_seed;
        report["stable_nodes"] = stable;
        report["region_nodes"] = region;
        report["boundary_samples"] = field.boundary.samples.size();
    }

    if (block["asymptote"].get<bool>()) {
        try {
            const delaystab::AsymptoticCurve curve = delaystab::large_delay_asymptote(
                p0, pbar, tau, block["omega_tau_window"].get<double>());
            json asymptote;
            asymptote["applicable"] = true;
            asymptote["lambda0_re"] = curve.lambda0.real();
            asymptote["lambda0_im"] = curve.lambda0.imag();
            asymptote["slope"] = curve.slope;
            asymptote["c_estimate"] = curve.c_estimate;
            asymptote["omega_tau_window"] = curve.omega_tau_window;
            asymptote["circle_metric"] = delaystab::circle_convergence_metric(p0, pbar, tau);
            json intersections = json::array();
            const std::vector<delaystab::AngleReport> angles =
                delaystab::intersection_angles(curve, tau);
            for (std::size_t i = 0; i < curve.intersections.size(); ++i) {
                const delaystab::SelfIntersection& point = curve.intersections[i];
                intersections.push_back({{"j", point.j},
                                         {"omega", point.omega},
                                         {"lambda", point.lambda},
                                         {"theta", point.theta},
                                         {"theta_asymptotic", angles[i].asymptotic}});
            }
            asymptote["intersections"] = intersections;
            report["asymptote"] = asymptote;

            const double width = curve.omega_tau_window / tau;
            std::string csv = "omega,re_lambda,im_lambda,radius,re_asymptote,im_asymptote\n";
            const int count = 201;
            for (int i = 0; i < count; ++i) {
                const double omega =
                    -width + 2.0 * width * static_cast<double>(i) / (count - 1);
                const cplx exact = delaystab::lambda_of_mu(cplx(0.0, omega), p0, pbar, tau);
                const cplx approx = delaystab::asymptotic_lambda(curve, omega, tau);
                csv += format_double(omega) + "," + format_double(exact.real()) + "," +
                       format_double(exact.imag()) + "," + format_double(std::abs(exact)) + "," +
                       format_double(approx.real()) + "," + format_double(approx.imag()) + "\n";
            }
            context.write_csv("msf_asymptote.csv", csv);
        } catch (const delaystab::TheoremHypothesisError& error) {
            report["asymptote"] = {{"applicable", false}, {"reason", error.what()}};
        }
    } else {
        report["asymptote"] = nullptr;
    }
    context.write_report("msf_report.json", report);
}

void run_simulate(const RunContext& context) {
    const json& resolved = context.resolved;
    const json& block = resolved["simulate"];
    delaystab::SimulationConfig config;
    config.formation = delaystab::make_formation_spec(
        config_matrix(resolved["topology"]["adjacency"]), config_matrix(block["offsets"]),
        config_p0(resolved), config_pbar(resolved), resolved["delay"]["tau"].get<double>());
    for (std::size_t axis = 0; axis < 3; ++axis)
        for (std::size_t p = 0; p < 5; ++p)
            config.trajectory.coefficients[axis][p] =
                block["trajectory"][axis][p].get<double>();
    config.t_end = block["t_end"].get<double>();
    config.dt = block["dt"].get<double>();
    config.history = block["history"].get<std::string>() == "on_target"
                         ? delaystab::HistoryPolicy::OnTarget
                         : delaystab::HistoryPolicy::PerturbedRest;
    config.history_scale = block["history_scale"].get<double>();
    if (!block["history_offsets"].is_null())
        config.history_offsets = config_matrix(block["history_offsets"]);

    const delaystab::TrajectoryLog log = delaystab::integrate(config);

    const auto stride = static_cast<std::size_t>(block["stride"].get<long>());
    delaystab::TrajectoryLog thinned;
    thinned.agents = log.agents;
    for (std::size_t k = 0; k < log.t.size(); k += stride) {
        thinned.t.push_back(log.t[k]);
        thinned.positions.push_back(log.positions[k]);
        thinned.velocities.push_back(log.velocities[k]);
        thinned.tracking_error.push_back(log.tracking_error[k]);
        thinned.formation_error.push_back(log.formation_error[k]);
    }
    context.write_csv("trajectory.csv", delaystab::to_trajectory_csv(thinned));
    context.write_csv("summary.csv", delaystab::to_summary_csv(thinned));

    json report;
    report["agents"] = log.agents;
    report["samples"] = log.t.size();
    report["written_samples"] = thinned.t.size();
    report["diverged"] = log.diverged;
    report["divergence_time"] = log.diverged ? json(log.divergence_time) : json();
    report["initial_tracking_error"] = log.tracking_error.front();
    report["final_tracking_error"] = log.tracking_error.back();
    report["initial_formation_error"] = log.formation_error.front();
    report["final_formation_error"] = log.formation_error.back();
    if (!block["fit_window"].is_null()) {
        try {
            report["decay_rate"] = delaystab::decay_rate_fit(
                log, block["fit_window"][0].get<double>(), block["fit_window"][1].get<double>());
        } catch (const delaystab::Error& error) {
            report["decay_rate"] = nullptr;
            report["decay_rate_error"] = error.what();
        }
    }
    context.write_report("simulate_report.json", report);
}

// ---- entry point ------------------------------------------------------------------

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "config file is not readable");
    json raw;
    try {
        raw = json::parse(in);
    } catch (const json::parse_error& error) {
        fail(path, std::string("invalid JSON: ") + error.what());
    }
    for (const std::string& entry : overrides) {
        const std::size_t split = entry.find('=');
        if (split == std::string::npos || split == 0)
            fail("--set " + entry, "expected dotted.path=value");
        std::string pointer = "/" + entry.substr(0, split);
        std::replace(pointer.begin(), pointer.end(), '.', '/');
        json value;
        try {
            value = json::parse(entry.substr(split + 1));
        } catch (const json::parse_error&) {
            value = entry.substr(split + 1);
        }
        try {
            raw[json::json_pointer(pointer)] = value;
        } catch (const json::exception& error) {
            fail("--set " + entry, std::string("cannot apply override: ") + error.what());
        }
    }
    return raw;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stability analysis and simulation for delay-coupled agent formations"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::string> overrides;
    const std::vector<std::pair<const char*, const char*>> commands = {
        {"classify", "universality classes of every Laplacian mode"},
        {"acs", "asymptotic continuous spectrum samples gamma(omega)"},
        {"spectrum", "characteristic roots of one mode at fixed delay"},
        {"bifurcation", "parametric boundary and contour curves"},
        {"msf", "master stability field, boundary and large-delay asymptote"},
        {"simulate", "integrate the full formation dynamics"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("config", config_path, "JSON configuration file")->required();
        sub->add_option("--set", overrides, "override a config field: dotted.path=value");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& help) {
        return app.exit(help);
    } catch (const CLI::ParseError& error) {
        (void)app.exit(error);
        return 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const json resolved = resolve_config(load_config(config_path, overrides));
        const RunContext context = make_context(command, resolved);
        if (command == "classify") run_classify(context);
        else if (command == "acs") run_acs(context);
        else if (command == "spectrum") run_spectrum(context);
        else if (command == "bifurcation") run_bifurcation(context);
        else if (command == "msf") run_msf(context);
        else run_simulate(context);
    } catch (const SchemaError& error) {
        std::fprintf(stderr, "config error: %s\n", error.what());
        return 2;
    } catch (const delaystab::InvalidParameterError& error) {
        std::fprintf(stderr, "config error: %s\n", error.what());
        return 2;
    } catch (const delaystab::InvalidTopologyError& error) {
        std::fprintf(stderr, "config error: %s\n", error.what());
        return 2;
    } catch (const delaystab::UnsupportedTopologyError& error) {
        std::fprintf(stderr, "config error: %s\n", error.what());
        return 2;
    } catch (const delaystab::UnsupportedParametersError& error) {
        std::fprintf(stderr, "config error: %s\n", error.what());
        return 2;
    } catch (const std::exception& error) {
        std::fprintf(stderr, "error: %s\n", error.what());
        return 3;
    }
    return 0;
}
