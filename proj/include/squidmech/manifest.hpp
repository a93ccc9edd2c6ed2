#pragma once

#include "squidmech/circuit.hpp"
#include "squidmech/config.hpp"
#include "squidmech/error.hpp"
#include "squidmech/lindblad.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace squidmech {

using Json = nlohmann::ordered_json;

inline constexpr const char* tool_version = "1.0.0";
inline constexpr int manifest_schema = 1;

// =============================================================================
// Manifest
// =============================================================================

struct ManifestError {
    std::string kind;
    std::string message;
    int exit_code = 0;
};

/// Structured record of one run: resolved inputs, derived physics, results.
struct RunManifest {
    std::string tool = "squidmech";
    std::string version = tool_version;
    int schema = manifest_schema;
    std::string subcommand;
    Json config = Json::object();
    Json derived = Json::object();
    Json couplings = Json::object();
    Json results = Json::object();
    Json integrator = Json::object();
    std::vector<std::string> warnings;
    std::vector<std::string> artifacts;
    std::optional<ManifestError> error;

    Json to_json() const {
        Json j;
        j["tool"] = tool;
        j["version"] = version;
        j["schema"] = schema;
        j["subcommand"] = subcommand;
        j["config"] = config;
        j["derived"] = derived;
        j["couplings"] = couplings;
        j["results"] = results;
        j["integrator"] = integrator;
        j["warnings"] = warnings;
        j["artifacts"] = artifacts;
        if (error) j["error"] = Json{{"kind", error->kind}, {"message", error->message}, {"exit_code", error->exit_code}};
        else j["error"] = nullptr;
        return j;
    }

    static RunManifest from_json(const Json& j) {
        static const char* required[] = {"tool", "version", "schema", "subcommand", "config", "derived",
                                         "couplings", "results", "integrator", "warnings", "artifacts", "error"};
        if (!j.is_object()) throw Error(ErrorKind::schema, "manifest is not a JSON object");
        for (const char* k : required)
            if (!j.contains(k)) throw Error(ErrorKind::schema, std::string("manifest lacks field '") + k + "'");
        RunManifest m;
        try {
            m.tool = j.at("tool").get<std::string>();
            m.version = j.at("version").get<std::string>();
            m.schema = j.at("schema").get<int>();
            m.subcommand = j.at("subcommand").get<std::string>();
            m.config = j.at("config");
            m.derived = j.at("derived");
            m.couplings = j.at("couplings");
            m.results = j.at("results");
            m.integrator = j.at("integrator");
            m.warnings = j.at("warnings").get<std::vector<std::string>>();
            m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
            if (!j.at("error").is_null()) {
                const auto& e = j.at("error");
                m.error = ManifestError{e.at("kind").get<std::string>(), e.at("message").get<std::string>(),
                                        e.at("exit_code").get<int>()};
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::schema, std::string("malformed manifest: ") + e.what());
        }
        if (m.schema != manifest_schema)
            throw Error(ErrorKind::schema, "unsupported manifest schema " + std::to_string(m.schema));
        return m;
    }

    std::string dump() const { return to_json().dump(2) + "\n"; }

    static RunManifest parse(const std::string& text) {
        Json j;
        try {
            j = Json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::schema, std::string("manifest is not valid JSON: ") + e.what());
        }
        return from_json(j);
    }

    void save(const std::filesystem::path& path) const {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream f(path, std::ios::binary);
        if (!f) throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
        f << dump();
    }

    static RunManifest load(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) throw Error(ErrorKind::io, "cannot open manifest '" + path.string() + "'");
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }
};

// =============================================================================
// Serialisation helpers
// =============================================================================

/// JSON numbers must be finite; non-finite values are stored as null.
inline Json num(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json config_json(const RunConfig& c) {
    const auto& p = c.circuit.params;
    const auto& t = c.circuit.targets;
    const auto& pr = c.protocol;
    const auto& s = c.solver;
    const auto& o = c.output;
    Json circuit = {{"EJ1_GHz", p.EJ1 / 1e9},
                    {"EJ2_GHz", p.EJ2 / 1e9},
                    {"EJsum_c_GHz", p.EJsum_c / 1e9},
                    {"aJ", p.aJ},
                    {"C1_fF", p.C1 / 1e-15},
                    {"C2_fF", p.C2 / 1e-15},
                    {"Cc_fF", p.Cc / 1e-15},
                    {"m_kg", p.m},
                    {"X_zpf_fm", c.circuit.X_zpf ? num(*c.circuit.X_zpf / 1e-15) : Json(nullptr)},
                    {"omega_m_MHz", p.omega_m / constants::two_pi / 1e6},
                    {"l_um", p.l / 1e-6},
                    {"beta0", p.beta0},
                    {"B_mT", p.B / 1e-3},
                    {"phi_b_Phi0", p.phi_b},
                    {"T_mK", p.T / 1e-3},
                    {"T1_us", p.T1 / 1e-6},
                    {"T2_us", p.T2 / 1e-6},
                    {"Qm", p.Qm},
                    {"transmon_ratio_min", p.transmon_ratio_min},
                    {"omega_q_GHz", t.omega_q ? num(*t.omega_q / constants::two_pi / 1e9) : Json(nullptr)},
                    {"EC_MHz", t.EC ? num(*t.EC / 1e6) : Json(nullptr)},
                    {"cancel_exchange", t.cancel_exchange}};
    std::vector<double> times_ns, snaps_ns;
    for (double v : pr.times) times_ns.push_back(v * 1e9);
    for (double v : o.snapshot_times) snaps_ns.push_back(v * 1e9);
    Json protocol = {{"cycles", pr.cycles},
                     {"t_excite_ns", pr.t_excite * 1e9},
                     {"t_cool_ns", pr.t_cool * 1e9},
                     {"t_reset_ns", pr.t_reset * 1e9},
                     {"excitation", pr.excitation},
                     {"greedy", pr.greedy},
                     {"cooling_initial_nbar", pr.cooling_initial_nbar ? num(*pr.cooling_initial_nbar) : Json(nullptr)},
                     {"stop_time_ns", pr.stop_time ? num(*pr.stop_time * 1e9) : Json(nullptr)},
                     {"initial_nbar", pr.initial_nbar},
                     {"target", pr.target},
                     {"target_mode", pr.target_mode},
                     {"objective", pr.objective},
                     {"times_ns", times_ns},
                     {"alpha", pr.alpha},
                     {"beta_phase_rad", pr.beta_phase},
                     {"J_MHz", pr.J / constants::two_pi / 1e6},
                     {"planner_starts", pr.planner_starts},
                     {"sweep_kind", pr.sweep_kind},
                     {"sweep_values", pr.sweep_values},
                     {"sweep_cooling", pr.sweep_cooling},
                     {"phi_min_Phi0", pr.phi_min},
                     {"phi_max_Phi0", pr.phi_max},
                     {"phi_points", pr.phi_points},
                     {"wigner_source", pr.wigner_source},
                     {"samples", pr.samples}};
    Json solver = {{"rtol", s.rtol},
                   {"atol", s.atol},
                   {"phonon_dim", s.phonon_dim},
                   {"qubit_dim", s.qubit_dim},
                   {"flags", c.term_flags().to_string()},
                   {"frame_offset_MHz", s.frame_offset / constants::two_pi / 1e6},
                   {"dissipation", s.dissipation}};
    Json output = {{"dir", o.dir},
                   {"snapshot_times_ns", snaps_ns},
                   {"wigner", {{"x_min", o.wigner.x_min}, {"x_max", o.wigner.x_max}, {"p_min", o.wigner.p_min},
                               {"p_max", o.wigner.p_max}, {"nx", o.wigner.nx}, {"np", o.wigner.np}}},
                   {"density_floor", o.density_floor}};
    return {{"circuit", circuit}, {"protocol", protocol}, {"solver", solver}, {"output", output}};
}

inline Json derived_json(const CircuitParams& p, const DerivedQuantities& d) {
    return {{"EC1_Hz", d.EC1},
            {"EC2_Hz", d.EC2},
            {"EJt1_Hz", d.EJt1},
            {"EJt2_Hz", d.EJt2},
            {"omega1_Hz", d.omega1 / constants::two_pi},
            {"omega2_Hz", d.omega2 / constants::two_pi},
            {"Z1_ohm", d.Z1},
            {"Z2_ohm", d.Z2},
            {"X_zpf_m", d.X_zpf},
            {"alpha_per_m", d.alpha},
            {"n_th", d.n_th},
            {"gamma_m_per_s", d.gamma_m},
            {"cJ", d.cJ},
            {"sJ", d.sJ},
            {"X0_m", d.X0},
            {"Cc_F", p.Cc},
            {"C1_F", p.C1},
            {"C2_F", p.C2},
            {"EJ1_Hz", p.EJ1},
            {"EJ2_Hz", p.EJ2},
            {"m_kg", p.m}};
}

inline Json couplings_json(const CouplingSet& c) {
    auto hz = [](double w) { return w / constants::two_pi; };
    return {{"g_Hz", hz(c.g)},       {"g_bare_Hz", hz(c.g_bare)}, {"g1_Hz", hz(c.g1)},       {"g2_Hz", hz(c.g2)},
            {"JL_Hz", hz(c.JL)},     {"JC_Hz", hz(c.JC)},         {"Jeff_Hz", hz(c.J_eff)},  {"V_Hz", hz(c.V)},
            {"Jn1_Hz", hz(c.Jn1)},   {"Jn2_Hz", hz(c.Jn2)},       {"g22x_Hz", hz(c.g22x)},   {"g31x_Hz", hz(c.g31x)},
            {"g13x_Hz", hz(c.g13x)}, {"gx2_11_Hz", hz(c.gx2_11)}, {"gx2_12_Hz", hz(c.gx2_12)}, {"gx2_22_Hz", hz(c.gx2_22)}};
}

inline Json integrator_json(const Trajectory& tr) {
    return {{"steps", tr.stats.steps},
            {"rejected", tr.stats.rejected},
            {"rhs_evals", tr.stats.rhs_evals},
            {"max_trace_drift", num(tr.max_trace_drift)},
            {"worst_eigen_ratio", num(tr.worst_eigen_ratio)},
            {"positivity_checks", tr.positivity_checks}};
}

// =============================================================================
// Regression comparison
// =============================================================================

struct CompareTolerances {
    double abs = 0.0;
    double rel = 0.0;
    std::map<std::string, double> per_field_abs; ///< JSON-pointer-like path → absolute tolerance
};

struct CompareRow {
    std::string path;
    std::optional<double> a;
    std::optional<double> b;
    double delta = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct CompareReport {
    std::vector<CompareRow> rows;

    bool all_pass() const {
        for (const auto& r : rows)
            if (!r.pass) return false;
        return true;
    }

    std::size_t failures() const {
        std::size_t n = 0;
        for (const auto& r : rows) n += r.pass ? 0 : 1;
        return n;
    }
};

namespace detail {

inline void flatten_numbers(const Json& j, const std::string& prefix, std::map<std::string, std::optional<double>>& out) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) flatten_numbers(it.value(), prefix + "/" + it.key(), out);
    } else if (j.is_array()) {
        for (std::size_t k = 0; k < j.size(); ++k) flatten_numbers(j[k], prefix + "/" + std::to_string(k), out);
    } else if (j.is_number()) {
        out[prefix] = j.get<double>();
    } else if (j.is_null()) {
        out[prefix] = std::nullopt;
    }
}

} // namespace detail

/// Per-metric comparison of the numeric content of derived, couplings and results.
inline CompareReport compare_runs(const RunManifest& A, const RunManifest& B, const CompareTolerances& tol) {
    if (A.schema != B.schema) throw Error(ErrorKind::schema, "manifest schemas differ");
    if (A.subcommand != B.subcommand)
        throw Error(ErrorKind::schema, "manifests come from different subcommands ('" + A.subcommand + "' vs '" +
                                           B.subcommand + "')");
    std::map<std::string, std::optional<double>> fa, fb;
    for (const char* block : {"derived", "couplings", "results"}) {
        const Json& ja = block == std::string("derived") ? A.derived : block == std::string("couplings") ? A.couplings : A.results;
        const Json& jb = block == std::string("derived") ? B.derived : block == std::string("couplings") ? B.couplings : B.results;
        detail::flatten_numbers(ja, std::string("/") + block, fa);
        detail::flatten_numbers(jb, std::string("/") + block, fb);
    }
    CompareReport rep;
    std::map<std::string, bool> keys;
    for (const auto& [k, _] : fa) keys[k] = true;
    for (const auto& [k, _] : fb) keys[k] = true;
    for (const auto& [k, _] : keys) {
        CompareRow r;
        r.path = k;
        const bool in_a = fa.count(k) > 0, in_b = fb.count(k) > 0;
        if (in_a) r.a = fa[k];
        if (in_b) r.b = fb[k];
        const auto pf = tol.per_field_abs.find(k);
        if (!in_a || !in_b) {
            r.delta = std::numeric_limits<double>::infinity();
            r.pass = false;
        } else if (!r.a || !r.b) {
            r.pass = !r.a && !r.b;
            r.delta = r.pass ? 0.0 : std::numeric_limits<double>::infinity();
        } else {
            r.delta = std::abs(*r.a - *r.b);
            r.tolerance = pf != tol.per_field_abs.end() ? pf->second
                                                       : tol.abs + tol.rel * std::max(std::abs(*r.a), std::abs(*r.b));
            r.pass = r.delta <= r.tolerance;
        }
        rep.rows.push_back(r);
    }
    return rep;
}

} // namespace squidmech
