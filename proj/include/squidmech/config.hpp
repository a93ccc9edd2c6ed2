#pragma once

#include "squidmech/circuit.hpp"
#include "squidmech/error.hpp"
#include "squidmech/hamiltonian.hpp"
#include "squidmech/lindblad.hpp"
#include "squidmech/protocols.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace squidmech {

// =============================================================================
// Run configuration
// =============================================================================

/// Circuit block as written by the user, in the unit system of the config file.
struct CircuitBlock {
    CircuitParams params;                 ///< SI values before operating-point resolution
    OperatingPointTargets targets = reference_targets();
    std::optional<double> X_zpf = 33.0e-15; ///< when set, the mass is derived from it (m)
};

/// Protocol block; each subcommand reads the fields it needs.
struct ProtocolBlock {
    // cooling
    int cycles = 100;
    double t_excite = 200e-9;
    double t_cool = 200e-9;
    double t_reset = 200e-9;
    std::string excitation = "ideal"; ///< ideal | gaussian
    bool greedy = false;
    std::optional<double> cooling_initial_nbar;
    // fock, ghz, bell
    std::optional<double> stop_time;
    double initial_nbar = 0.05;
    // plan, superpose
    std::string target;               ///< "n:value,..." (probabilities or amplitudes)
    std::string target_mode = "amplitudes"; ///< amplitudes | distribution
    std::string objective = "most_probable";
    std::vector<double> times;        ///< superposition times (s)
    double alpha = 1.0;
    double beta_phase = 0.0;
    double J = constants::two_pi * 1.0e6; ///< exchange rate of ideal U_J gates (rad/s)
    int planner_starts = 96;
    // sweep
    std::string sweep_kind = "stray_J";
    std::vector<double> sweep_values; ///< Hz for stray_J and detuning, s for coherence
    bool sweep_cooling = false;
    int sweep_workers = 0;
    // couplings
    double phi_min = 0.40;
    double phi_max = 0.50;
    int phi_points = 101;
    // wigner
    std::string wigner_source = "fock"; ///< fock | ghz | bell | superpose | vacuum
    int samples = 101;
};

struct SolverBlock {
    double rtol = 1e-8;
    double atol = 1e-10;
    int phonon_dim = 15;
    int qubit_dim = 3;
    std::string flags = "default";
    double frame_offset = 0.0;  ///< ω_ref − ω_1 (rad/s)
    bool dissipation = true;
};

struct OutputBlock {
    std::string dir = "out";
    std::vector<double> snapshot_times; ///< s
    WignerGridSpec wigner;
    double density_floor = 0.005;
};

struct RunConfig {
    CircuitBlock circuit;
    ProtocolBlock protocol;
    SolverBlock solver;
    OutputBlock output;
    std::string source = "<defaults>";

    /// Circuit parameters with the operating-point targets applied.
    CircuitParams resolved_params() const {
        CircuitParams p = circuit.params;
        if (circuit.X_zpf) p.m = mass_for_zero_point(*circuit.X_zpf, p.omega_m);
        return resolve_operating_point(p, circuit.targets);
    }

    TermFlags term_flags() const { return TermFlags::parse(solver.flags); }

    Tolerances tolerances() const {
        Tolerances t;
        t.rtol = solver.rtol;
        t.atol = solver.atol;
        return t;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

inline double parse_double(const std::string& v) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        throw Error(ErrorKind::config, "not a number: '" + v + "'");
    }
    if (used != v.size()) throw Error(ErrorKind::config, "trailing characters in number: '" + v + "'");
    if (!std::isfinite(x)) throw Error(ErrorKind::config, "non-finite value: '" + v + "'");
    return x;
}

inline int parse_int(const std::string& v) {
    const double x = parse_double(v);
    if (x != std::floor(x) || std::abs(x) > 1e9) throw Error(ErrorKind::config, "not an integer: '" + v + "'");
    return static_cast<int>(x);
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    throw Error(ErrorKind::config, "not a boolean: '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& v) {
    std::vector<double> out;
    if (trim(v).empty()) return out;
    for (const auto& item : split(v, ',')) out.push_back(parse_double(item));
    return out;
}

/// Unit suffixes and the SI factor each one stands for.
inline const std::map<std::string, double>& unit_factors() {
    static const std::map<std::string, double> u = {
        {"GHz", 1e9},  {"MHz", 1e6},  {"kHz", 1e3}, {"Hz", 1.0},   {"mT", 1e-3}, {"T", 1.0},   {"um", 1e-6},
        {"fF", 1e-15}, {"mK", 1e-3},  {"K", 1.0},   {"us", 1e-6},  {"ns", 1e-9}, {"s", 1.0},   {"kg", 1.0},
        {"fm", 1e-15}, {"rad", 1.0},  {"Phi0", 1.0}};
    return u;
}

struct KeyHandler {
    std::function<void(const std::string&)> set;
};

using KeyTable = std::map<std::string, KeyHandler>;

inline void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::config, "value out of range: " + what);
}

inline double positive(double x, const char* what) {
    require(x > 0.0, std::string(what) + " must be positive");
    return x;
}

inline double non_negative(double x, const char* what) {
    require(x >= 0.0, std::string(what) + " must be non-negative");
    return x;
}

inline std::map<std::string, KeyTable> key_tables(RunConfig& c) {
    using namespace constants;
    auto& cp = c.circuit.params;
    auto& tg = c.circuit.targets;
    auto& pr = c.protocol;
    auto& so = c.solver;
    auto& ou = c.output;
    std::map<std::string, KeyTable> t;

    auto& C = t["circuit"];
    C["EJ1_GHz"] = {[&](const std::string& v) { cp.EJ1 = positive(parse_double(v), "EJ1") * 1e9; tg.omega_q.reset(); }};
    C["EJ2_GHz"] = {[&](const std::string& v) { cp.EJ2 = positive(parse_double(v), "EJ2") * 1e9; tg.omega_q.reset(); }};
    C["EJsum_c_GHz"] = {[&](const std::string& v) { cp.EJsum_c = positive(parse_double(v), "EJsum_c") * 1e9; }};
    C["aJ"] = {[&](const std::string& v) {
        const double x = parse_double(v);
        require(x >= 0.0 && x < 1.0, "aJ must lie in [0, 1)");
        cp.aJ = x;
    }};
    C["C1_fF"] = {[&](const std::string& v) { cp.C1 = positive(parse_double(v), "C1") * 1e-15; tg.EC.reset(); }};
    C["C2_fF"] = {[&](const std::string& v) { cp.C2 = positive(parse_double(v), "C2") * 1e-15; tg.EC.reset(); }};
    C["Cc_fF"] = {[&](const std::string& v) {
        cp.Cc = non_negative(parse_double(v), "Cc") * 1e-15;
        tg.cancel_exchange = false;
    }};
    C["m_kg"] = {[&](const std::string& v) { cp.m = positive(parse_double(v), "m"); c.circuit.X_zpf.reset(); }};
    C["X_zpf_fm"] = {[&](const std::string& v) { c.circuit.X_zpf = positive(parse_double(v), "X_zpf") * 1e-15; }};
    C["omega_m_MHz"] = {[&](const std::string& v) { cp.omega_m = two_pi * positive(parse_double(v), "omega_m") * 1e6; }};
    C["l_um"] = {[&](const std::string& v) { cp.l = positive(parse_double(v), "l") * 1e-6; }};
    C["beta0"] = {[&](const std::string& v) { cp.beta0 = positive(parse_double(v), "beta0"); }};
    C["B_mT"] = {[&](const std::string& v) { cp.B = positive(parse_double(v), "B") * 1e-3; }};
    C["phi_b_Phi0"] = {[&](const std::string& v) {
        const double x = parse_double(v);
        require(x >= 0.0 && x < 1.0, "phi_b must lie in [0, 1)");
        cp.phi_b = x;
    }};
    C["T_mK"] = {[&](const std::string& v) { cp.T = positive(parse_double(v), "T") * 1e-3; }};
    C["T1_us"] = {[&](const std::string& v) { cp.T1 = positive(parse_double(v), "T1") * 1e-6; }};
    C["T2_us"] = {[&](const std::string& v) { cp.T2 = positive(parse_double(v), "T2") * 1e-6; }};
    C["Qm"] = {[&](const std::string& v) { cp.Qm = positive(parse_double(v), "Qm"); }};
    C["transmon_ratio_min"] = {[&](const std::string& v) { cp.transmon_ratio_min = positive(parse_double(v), "transmon_ratio_min"); }};
    C["omega_q_GHz"] = {[&](const std::string& v) {
        if (v == "none") tg.omega_q.reset();
        else tg.omega_q = two_pi * positive(parse_double(v), "omega_q") * 1e9;
    }};
    C["EC_MHz"] = {[&](const std::string& v) {
        if (v == "none") tg.EC.reset();
        else tg.EC = positive(parse_double(v), "EC") * 1e6;
    }};
    C["cancel_exchange"] = {[&](const std::string& v) { tg.cancel_exchange = parse_bool(v); }};

    auto& P = t["protocol"];
    P["cycles"] = {[&](const std::string& v) { pr.cycles = parse_int(v); require(pr.cycles >= 1, "cycles must be at least 1"); }};
    P["t_excite_ns"] = {[&](const std::string& v) { pr.t_excite = positive(parse_double(v), "t_excite") * 1e-9; }};
    P["t_cool_ns"] = {[&](const std::string& v) { pr.t_cool = positive(parse_double(v), "t_cool") * 1e-9; }};
    P["t_reset_ns"] = {[&](const std::string& v) { pr.t_reset = positive(parse_double(v), "t_reset") * 1e-9; }};
    P["excitation"] = {[&](const std::string& v) {
        require(v == "ideal" || v == "gaussian", "excitation must be ideal or gaussian");
        pr.excitation = v;
    }};
    P["greedy"] = {[&](const std::string& v) { pr.greedy = parse_bool(v); }};
    P["cooling_initial_nbar"] = {[&](const std::string& v) { pr.cooling_initial_nbar = non_negative(parse_double(v), "cooling_initial_nbar"); }};
    P["stop_time_ns"] = {[&](const std::string& v) { pr.stop_time = non_negative(parse_double(v), "stop_time") * 1e-9; }};
    P["initial_nbar"] = {[&](const std::string& v) { pr.initial_nbar = non_negative(parse_double(v), "initial_nbar"); }};
    P["target"] = {[&](const std::string& v) { pr.target = v; }};
    P["target_mode"] = {[&](const std::string& v) {
        require(v == "amplitudes" || v == "distribution", "target_mode must be amplitudes or distribution");
        pr.target_mode = v;
    }};
    P["objective"] = {[&](const std::string& v) {
        require(v == "most_probable" || v == "shortest", "objective must be most_probable or shortest");
        pr.objective = v;
    }};
    P["times_ns"] = {[&](const std::string& v) {
        pr.times.clear();
        for (double x : parse_list(v)) pr.times.push_back(non_negative(x, "times") * 1e-9);
    }};
    P["alpha"] = {[&](const std::string& v) {
        const double x = parse_double(v);
        require(x >= 0.0 && x <= 1.0, "alpha must lie in [0, 1]");
        pr.alpha = x;
    }};
    P["beta_phase_rad"] = {[&](const std::string& v) { pr.beta_phase = parse_double(v); }};
    P["J_MHz"] = {[&](const std::string& v) { pr.J = two_pi * positive(parse_double(v), "J") * 1e6; }};
    P["planner_starts"] = {[&](const std::string& v) { pr.planner_starts = parse_int(v); require(pr.planner_starts >= 1, "planner_starts must be at least 1"); }};
    P["sweep_kind"] = {[&](const std::string& v) {
        require(v == "stray_J" || v == "detuning" || v == "coherence", "sweep_kind must be stray_J, detuning or coherence");
        pr.sweep_kind = v;
    }};
    P["sweep_values_MHz"] = {[&](const std::string& v) {
        pr.sweep_values.clear();
        for (double x : parse_list(v)) pr.sweep_values.push_back(x * 1e6);
    }};
    P["sweep_values_kHz"] = {[&](const std::string& v) {
        pr.sweep_values.clear();
        for (double x : parse_list(v)) pr.sweep_values.push_back(x * 1e3);
    }};
    P["sweep_values_us"] = {[&](const std::string& v) {
        pr.sweep_values.clear();
        for (double x : parse_list(v)) pr.sweep_values.push_back(positive(x, "coherence time") * 1e-6);
    }};
    P["sweep_cooling"] = {[&](const std::string& v) { pr.sweep_cooling = parse_bool(v); }};
    P["sweep_workers"] = {[&](const std::string& v) { pr.sweep_workers = parse_int(v); require(pr.sweep_workers >= 0, "sweep_workers must be non-negative"); }};
    P["phi_min_Phi0"] = {[&](const std::string& v) { pr.phi_min = parse_double(v); require(pr.phi_min >= 0.0 && pr.phi_min < 1.0, "phi_min must lie in [0, 1)"); }};
    P["phi_max_Phi0"] = {[&](const std::string& v) { pr.phi_max = parse_double(v); require(pr.phi_max >= 0.0 && pr.phi_max < 1.0, "phi_max must lie in [0, 1)"); }};
    P["phi_points"] = {[&](const std::string& v) { pr.phi_points = parse_int(v); require(pr.phi_points >= 1, "phi_points must be at least 1"); }};
    P["wigner_source"] = {[&](const std::string& v) {
        require(v == "fock" || v == "ghz" || v == "bell" || v == "superpose" || v == "vacuum",
                "wigner_source must be fock, ghz, bell, superpose or vacuum");
        pr.wigner_source = v;
    }};
    P["samples"] = {[&](const std::string& v) { pr.samples = parse_int(v); require(pr.samples >= 2, "samples must be at least 2"); }};

    auto& S = t["solver"];
    S["rtol"] = {[&](const std::string& v) { so.rtol = positive(parse_double(v), "rtol"); }};
    S["atol"] = {[&](const std::string& v) { so.atol = positive(parse_double(v), "atol"); }};
    S["phonon_dim"] = {[&](const std::string& v) { so.phonon_dim = parse_int(v); require(so.phonon_dim >= 2, "phonon_dim must be at least 2"); }};
    S["qubit_dim"] = {[&](const std::string& v) { so.qubit_dim = parse_int(v); require(so.qubit_dim >= 2, "qubit_dim must be at least 2"); }};
    S["flags"] = {[&](const std::string& v) {
        TermFlags::parse(v);
        so.flags = v;
    }};
    S["frame_offset_MHz"] = {[&](const std::string& v) { so.frame_offset = two_pi * parse_double(v) * 1e6; }};
    S["dissipation"] = {[&](const std::string& v) { so.dissipation = parse_bool(v); }};

    auto& O = t["output"];
    O["dir"] = {[&](const std::string& v) { ou.dir = v; }};
    O["snapshot_times_ns"] = {[&](const std::string& v) {
        ou.snapshot_times.clear();
        for (double x : parse_list(v)) ou.snapshot_times.push_back(non_negative(x, "snapshot time") * 1e-9);
    }};
    O["wigner_x_min"] = {[&](const std::string& v) { ou.wigner.x_min = parse_double(v); }};
    O["wigner_x_max"] = {[&](const std::string& v) { ou.wigner.x_max = parse_double(v); }};
    O["wigner_p_min"] = {[&](const std::string& v) { ou.wigner.p_min = parse_double(v); }};
    O["wigner_p_max"] = {[&](const std::string& v) { ou.wigner.p_max = parse_double(v); }};
    O["wigner_nx"] = {[&](const std::string& v) { ou.wigner.nx = parse_int(v); require(ou.wigner.nx >= 1, "wigner_nx must be at least 1"); }};
    O["wigner_np"] = {[&](const std::string& v) { ou.wigner.np = parse_int(v); require(ou.wigner.np >= 1, "wigner_np must be at least 1"); }};
    O["density_floor"] = {[&](const std::string& v) { ou.density_floor = non_negative(parse_double(v), "density_floor"); }};
    return t;
}

/// Suggests the suffixed spelling of a key given without its unit.
inline std::optional<std::string> suffixed_spelling(const KeyTable& table, const std::string& key) {
    for (const auto& [name, _] : table) {
        const auto us = name.rfind('_');
        if (us == std::string::npos) continue;
        if (name.substr(0, us) == key && unit_factors().count(name.substr(us + 1))) return name;
    }
    return std::nullopt;
}

} // namespace detail

/// Parses configuration text; `source` names the origin in diagnostics.
inline RunConfig parse_config_text(const std::string& text, const std::string& source = "<string>") {
    RunConfig c;
    c.source = source;
    auto tables = detail::key_tables(c);
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    auto fail = [&](const std::string& key, const std::string& msg) {
        std::string where = source + ":" + std::to_string(lineno);
        if (!key.empty()) where += ": key '" + key + "'";
        throw Error(ErrorKind::config, where + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail("", "malformed section header '" + line + "'");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (!tables.count(section)) fail("", "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("", "expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (section.empty()) fail(key, "key outside of any section");
        auto& table = tables.at(section);
        const auto it = table.find(key);
        if (it == table.end()) {
            if (const auto s = detail::suffixed_spelling(table, key))
                fail(key, "missing unit suffix (expected '" + *s + "')");
            fail(key, "unknown key in [" + section + "]");
        }
        try {
            it->second.set(value);
        } catch (const Error& e) {
            fail(key, e.what());
        }
    }
    try {
        (void)c.resolved_params();
    } catch (const Error& e) {
        throw Error(ErrorKind::config, source + ": inconsistent circuit block: " + e.what());
    }
    return c;
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::io, "cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), path);
}

/// Simulation model described by a configuration.
inline SimulationModel make_model(const RunConfig& c) {
    SimulationModel m;
    m.params = c.resolved_params();
    m.flags = c.term_flags();
    m.phonon_dim = c.solver.phonon_dim;
    m.qubit_dim = c.solver.qubit_dim;
    m.tol = c.tolerances();
    m.frame_offset = c.solver.frame_offset;
    m.dissipation = c.solver.dissipation;
    return m;
}

} // namespace squidmech
