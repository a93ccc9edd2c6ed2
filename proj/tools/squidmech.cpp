// Command-line front end: one subcommand per protocol, each writing a run
// manifest plus CSV artifacts into the output directory.

#include "squidmech/analysis.hpp"
#include "squidmech/config.hpp"
#include "squidmech/manifest.hpp"
#include "squidmech/output.hpp"
#include "squidmech/planner.hpp"
#include "squidmech/protocols.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace squidmech;

namespace {

/// Exit code for failures that are not squidmech errors.
constexpr int exit_internal = 1;

struct CommonOptions {
    std::string config;
    std::string out;
    int phonon_dim = 0;
    std::string flags;
    std::string snapshot_times;
    bool seedless = false;
};

struct Context {
    RunConfig cfg;
    fs::path out;
    RunManifest manifest;

    void artifact(const CsvWriter& w, const std::string& name) {
        w.save(out / name);
        manifest.artifacts.push_back(name);
    }
};

Context make_context(const std::string& sub, const CommonOptions& o) {
    Context c;
    c.cfg = o.config.empty() ? RunConfig{} : parse_config(o.config);
    if (o.phonon_dim > 0) c.cfg.solver.phonon_dim = o.phonon_dim;
    else if (o.phonon_dim < 0) throw Error(ErrorKind::usage, "--phonon-dim must be positive");
    if (!o.flags.empty()) {
        TermFlags::parse(o.flags);
        c.cfg.solver.flags = o.flags;
    }
    if (!o.snapshot_times.empty()) {
        c.cfg.output.snapshot_times.clear();
        for (double t : detail::parse_list(o.snapshot_times)) c.cfg.output.snapshot_times.push_back(t * 1e-9);
    }
    c.out = o.out.empty() ? fs::path(c.cfg.output.dir) : fs::path(o.out);
    fs::create_directories(c.out);
    c.manifest.subcommand = sub;
    c.manifest.config = config_json(c.cfg);
    const CircuitParams p = c.cfg.resolved_params();
    const DerivedQuantities d = derive_static(p);
    c.manifest.derived = derived_json(p, d);
    c.manifest.couplings = couplings_json(couplings(p, p.phi_b));
    for (const auto& w : d.warnings) c.manifest.warnings.push_back(w);
    return c;
}

Json trajectory_summary(const Trajectory& tr) {
    Json j;
    j["final_n_m"] = num(tr.n_m.empty() ? 0.0 : tr.n_m.back());
    j["final_n_q1"] = num(tr.n_q1.empty() ? 0.0 : tr.n_q1.back());
    j["final_n_q2"] = num(tr.n_q2.empty() ? 0.0 : tr.n_q2.back());
    j["final_purity"] = num(tr.purity.empty() ? 0.0 : tr.purity.back());
    Json ms = Json::array();
    for (const auto& m : tr.measurements) ms.push_back({{"t_ns", m.t * 1e9}, {"name", m.name}, {"probability", m.probability}});
    j["measurements"] = ms;
    return j;
}

void write_state_outputs(Context& c, const ProtocolResult& r, bool full_density) {
    c.artifact(trajectory_csv(r.trajectory), "trajectory.csv");
    const DensityState& dm = full_density ? r.final_state : r.phonon_state;
    c.artifact(density_csv(density_matrix_export(dm, c.cfg.output.density_floor)), "density.csv");
    const WignerGrid w = wigner(r.phonon_state, c.cfg.output.wigner);
    c.artifact(wigner_csv(w), "wigner.csv");
    c.manifest.results["wigner_convention"] = w.convention;
    c.manifest.results["wigner_padding_delta"] = num(w.padding_delta);
    if (!w.warning.empty()) c.manifest.warnings.push_back(w.warning);
    for (std::size_t k = 0; k < r.trajectory.snapshots.size(); ++k) {
        const auto& s = r.trajectory.snapshots[k];
        const DensityState f = to_interaction_frame(s.state, s.phases);
        c.artifact(density_csv(density_matrix_export(f, c.cfg.output.density_floor)),
                   "snapshot_" + std::to_string(k) + "_density.csv");
    }
    c.manifest.integrator = integrator_json(r.trajectory);
    for (const auto& w2 : r.warnings) c.manifest.warnings.push_back(w2);
}

// ----------------------------------------------------------------------------
// Subcommands
// ----------------------------------------------------------------------------

void cmd_couplings(Context& c) {
    const auto& pr = c.cfg.protocol;
    const CircuitParams p = c.cfg.resolved_params();
    const auto rows = coupling_sweep(p, linspace(pr.phi_min, pr.phi_max, static_cast<std::size_t>(pr.phi_points)));
    c.artifact(coupling_sweep_csv(rows), "couplings.csv");
    c.manifest.results["g_Hz_at_phi_b"] = couplings(p, p.phi_b).g / constants::two_pi;
    c.manifest.results["g_Hz_at_half_flux"] = couplings(p, 0.5).g / constants::two_pi;
    c.manifest.results["points"] = pr.phi_points;
}

void cmd_cool(Context& c) {
    const auto& pr = c.cfg.protocol;
    CoolingConfig cc;
    cc.cycles = pr.cycles;
    cc.t_excite = pr.t_excite;
    cc.t_cool = pr.t_cool;
    cc.t_reset = pr.t_reset;
    cc.excitation = pr.excitation == "gaussian" ? CoolingConfig::Excitation::gaussian : CoolingConfig::Excitation::ideal;
    cc.greedy = pr.greedy;
    cc.initial_nbar = pr.cooling_initial_nbar;
    const ProtocolResult r = run_cooling(make_model(c.cfg), cc);
    c.artifact(trajectory_csv(r.trajectory), "trajectory.csv");
    c.artifact(cycle_csv(r.cycle_n_m), "cycles.csv");
    c.manifest.results["final_n_m"] = num(r.cycle_n_m.back());
    c.manifest.results["vacuum_population"] = num(r.fidelity.value_or(0.0));
    c.manifest.results["cycles"] = cc.cycles;
    c.manifest.results["trajectory"] = trajectory_summary(r.trajectory);
    c.manifest.integrator = integrator_json(r.trajectory);
}

void cmd_fock(Context& c, FockTarget target) {
    FockConfig fc;
    fc.target = target;
    fc.stop_time = c.cfg.protocol.stop_time;
    fc.initial_nbar = c.cfg.protocol.initial_nbar;
    fc.gaussian_excitation = c.cfg.protocol.excitation == "gaussian";
    fc.t_excite = c.cfg.protocol.t_excite;
    fc.samples = c.cfg.protocol.samples;
    fc.snapshot_times = c.cfg.output.snapshot_times;
    const SimulationModel m = make_model(c.cfg);
    const ProtocolResult r = run_fock(m, fc);
    write_state_outputs(c, r, target != FockTarget::fock);
    c.manifest.results["target"] = to_string(target);
    c.manifest.results["stop_time_ns"] = fc.stop_time.value_or(fock_stop_time(target, m.coupling_set().g)) * 1e9;
    c.manifest.results["fidelity"] = num(r.fidelity.value_or(0.0));
    c.manifest.results["root_fidelity"] = num(r.root_fidelity.value_or(0.0));
    c.manifest.results["trajectory"] = trajectory_summary(r.trajectory);
}

Json plan_json(const DistributionPlan& p) {
    std::vector<double> t_ns;
    for (double t : p.times) t_ns.push_back(t * 1e9);
    Json pred = Json::array(), tgt = Json::array();
    for (const auto& v : p.predicted) pred.push_back({v.real(), v.imag()});
    for (const auto& v : p.target_amplitudes) tgt.push_back({v.real(), v.imag()});
    return {{"kind", "alternating"},
            {"mode", p.mode == PlanMode::amplitudes ? "amplitudes" : "distribution"},
            {"times_ns", t_ns},
            {"alpha", p.alpha},
            {"beta_phase_rad", p.beta_phase},
            {"success_probability", p.success_probability},
            {"residual", p.residual},
            {"converged_starts", p.converged_starts},
            {"target_probabilities", p.target_probabilities},
            {"target_amplitudes", tgt},
            {"predicted_amplitudes", pred}};
}

Json arbitrary_json(const ArbitraryPlan& p) {
    Json steps = Json::array();
    for (const auto& s : p.steps)
        steps.push_back({{"n", s.n},
                         {"theta_J_rad", s.theta_J},
                         {"t_J_ns", s.t_J * 1e9},
                         {"theta_tri_rad", s.theta_tri},
                         {"t_tri_ns", s.t_tri * 1e9}});
    Json tgt = Json::array();
    for (const auto& v : p.target) tgt.push_back({v.real(), v.imag()});
    return {{"kind", "arbitrary"},
            {"g_Hz", p.g / constants::two_pi},
            {"J_Hz", p.J / constants::two_pi},
            {"steps", steps},
            {"target_amplitudes", tgt},
            {"total_time_ns", p.total_time() * 1e9}};
}

std::vector<cplx> amplitudes_from_json(const Json& a) {
    std::vector<cplx> out;
    for (const auto& v : a) out.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    return out;
}

void cmd_plan(Context& c, const std::string& mode, int select_k) {
    const auto& pr = c.cfg.protocol;
    if (pr.target.empty()) throw Error(ErrorKind::usage, "plan needs a target (--target or protocol.target)");
    const SynthesisTarget raw = SynthesisTarget::parse(pr.target);
    const SimulationModel m = make_model(c.cfg);
    const double g = m.coupling_set().g;
    if (mode == "arbitrary") {
        const ArbitraryPlan p = plan_arbitrary_state(raw.amplitudes, g, pr.J);
        const SectorState s = replay_arbitrary_ideal(p);
        c.manifest.results["plan"] = arbitrary_json(p);
        c.manifest.results["ideal_replay_fidelity"] = sector_fidelity(s, p.target);
        return;
    }
    const SynthesisTarget t = raw.padded_even();
    PlannerOptions opt;
    opt.starts = pr.planner_starts;
    opt.objective = pr.objective == "shortest" ? PlanObjective::shortest : PlanObjective::most_probable;
    DistributionPlan p = mode == "distribution" ? plan_distribution_state(t.probabilities, g, opt)
                                                : plan_amplitude_state(t.amplitudes, g, opt);
    if (select_k > 0) {
        SuperpositionConfig base;
        base.initial_nbar = pr.initial_nbar;
        base.target = t.amplitudes;
        const PlanSelection s = select_plan_by_simulation(m, p, base, select_k);
        c.manifest.results["selection"] = {{"simulated", s.simulated},
                                           {"fidelity", s.fidelity},
                                           {"root_fidelity", std::sqrt(s.fidelity)},
                                           {"success_probability", s.success_probability}};
        p = s.plan;
    }
    c.manifest.results["plan"] = plan_json(p);
}

void cmd_superpose(Context& c, const std::string& plan_path) {
    const auto& pr = c.cfg.protocol;
    const SimulationModel m = make_model(c.cfg);
    if (!plan_path.empty()) {
        const RunManifest pm = RunManifest::load(plan_path);
        if (!pm.results.contains("plan")) throw Error(ErrorKind::schema, "'" + plan_path + "' holds no plan");
        const Json& pj = pm.results.at("plan");
        try {
            if (pj.at("kind") == "arbitrary") {
                ArbitraryPlan ap;
                ap.g = m.coupling_set().g;
                ap.J = pj.at("J_Hz").get<double>() * constants::two_pi;
                ap.target = amplitudes_from_json(pj.at("target_amplitudes"));
                for (const auto& s : pj.at("steps"))
                    ap.steps.push_back({s.at("n").get<int>(), s.at("theta_J_rad").get<double>(), s.at("t_J_ns").get<double>() * 1e-9,
                                        s.at("theta_tri_rad").get<double>(), s.at("t_tri_ns").get<double>() * 1e-9});
                ArbitraryReplayConfig rc;
                rc.initial_nbar = pr.initial_nbar;
                const ProtocolResult r = replay_arbitrary_full(m, ap, rc);
                write_state_outputs(c, r, false);
                c.manifest.results["fidelity"] = num(r.fidelity.value_or(0.0));
                c.manifest.results["root_fidelity"] = num(r.root_fidelity.value_or(0.0));
                c.manifest.results["success_probability"] = num(r.success_probability);
                c.manifest.results["trajectory"] = trajectory_summary(r.trajectory);
                return;
            }
            SuperpositionConfig sc;
            for (const auto& t : pj.at("times_ns")) sc.times.push_back(t.get<double>() * 1e-9);
            sc.alpha = pj.at("alpha").get<double>();
            sc.beta_phase = pj.at("beta_phase_rad").get<double>();
            sc.target = amplitudes_from_json(pj.at("mode") == "amplitudes" ? pj.at("target_amplitudes")
                                                                             : pj.at("predicted_amplitudes"));
            sc.initial_nbar = pr.initial_nbar;
            c.cfg.protocol.times = sc.times;
            c.cfg.protocol.alpha = sc.alpha;
            c.cfg.protocol.beta_phase = sc.beta_phase;
            c.manifest.config = config_json(c.cfg);
            const ProtocolResult r = run_superposition(m, sc);
            write_state_outputs(c, r, false);
            c.manifest.results["fidelity"] = num(r.fidelity.value_or(0.0));
            c.manifest.results["root_fidelity"] = num(r.root_fidelity.value_or(0.0));
            c.manifest.results["success_probability"] = num(r.success_probability);
            c.manifest.results["trajectory"] = trajectory_summary(r.trajectory);
            return;
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::schema, "malformed plan in '" + plan_path + "': " + e.what());
        }
    }
    if (pr.times.empty()) throw Error(ErrorKind::usage, "superpose needs --plan or protocol.times_ns");
    SuperpositionConfig sc;
    sc.times = pr.times;
    sc.alpha = pr.alpha;
    sc.beta_phase = pr.beta_phase;
    sc.initial_nbar = pr.initial_nbar;
    if (!pr.target.empty()) sc.target = SynthesisTarget::parse(pr.target).amplitudes;
    const ProtocolResult r = run_superposition(m, sc);
    write_state_outputs(c, r, false);
    if (r.fidelity) {
        c.manifest.results["fidelity"] = num(*r.fidelity);
        c.manifest.results["root_fidelity"] = num(*r.root_fidelity);
    }
    c.manifest.results["success_probability"] = num(r.success_probability);
    c.manifest.results["trajectory"] = trajectory_summary(r.trajectory);
}

void cmd_sweep(Context& c) {
    const auto& pr = c.cfg.protocol;
    if (pr.sweep_values.empty()) throw Error(ErrorKind::usage, "sweep needs protocol.sweep_values_*");
    const SweepKind kind = pr.sweep_kind == "detuning" ? SweepKind::detuning
                           : pr.sweep_kind == "coherence" ? SweepKind::coherence
                                                          : SweepKind::stray_J;
    SweepOptions o;
    o.samples = pr.samples % 2 == 0 ? pr.samples + 1 : pr.samples;
    o.initial_nbar = 0.0;
    o.include_cooling = pr.sweep_cooling;
    o.workers = pr.sweep_workers;
    o.cooling.cycles = pr.cycles;
    o.cooling.t_cool = pr.t_cool;
    o.cooling.t_reset = pr.t_reset;
    o.cooling.initial_nbar = pr.cooling_initial_nbar;
    const auto rows = robustness_sweep(make_model(c.cfg), kind, pr.sweep_values, o);
    c.artifact(sweep_csv(rows), "sweep.csv");
    Json arr = Json::array();
    for (const auto& r : rows)
        arr.push_back({{"value", r.value},
                       {"fidelity_prep", r.fidelity_prep},
                       {"root_fidelity_prep", r.root_fidelity_prep},
                       {"min_fidelity", r.min_fidelity},
                       {"peak_phonon_one", r.peak_phonon_one},
                       {"cooling_n_m", r.cooling_n_m ? num(*r.cooling_n_m) : Json(nullptr)}});
    c.manifest.results["kind"] = to_string(kind);
    c.manifest.results["rows"] = arr;
}

void cmd_wigner(Context& c) {
    const auto& pr = c.cfg.protocol;
    const SimulationModel m = make_model(c.cfg);
    DensityState phonon = thermal_state(m.phonon_dim, 0.0, "m");
    if (pr.wigner_source == "fock" || pr.wigner_source == "ghz" || pr.wigner_source == "bell") {
        FockConfig fc;
        fc.target = pr.wigner_source == "fock" ? FockTarget::fock : pr.wigner_source == "ghz" ? FockTarget::ghz : FockTarget::bell;
        fc.initial_nbar = pr.initial_nbar;
        fc.samples = 2;
        phonon = run_fock(m, fc).phonon_state;
    } else if (pr.wigner_source == "superpose") {
        if (pr.times.empty()) throw Error(ErrorKind::usage, "wigner_source = superpose needs protocol.times_ns");
        SuperpositionConfig sc;
        sc.times = pr.times;
        sc.alpha = pr.alpha;
        sc.beta_phase = pr.beta_phase;
        sc.initial_nbar = pr.initial_nbar;
        phonon = run_superposition(m, sc).phonon_state;
    }
    const WignerGrid w = wigner(phonon, c.cfg.output.wigner);
    c.artifact(wigner_csv(w), "wigner.csv");
    c.artifact(density_csv(density_matrix_export(phonon, c.cfg.output.density_floor)), "density.csv");
    const detail::DisplacedParity origin(phonon.rho, c.cfg.output.wigner.guard);
    c.manifest.results["source"] = pr.wigner_source;
    c.manifest.results["W_origin"] = origin(0.0, 0.0);
    c.manifest.results["grid_integral"] = w.integral();
    c.manifest.results["wigner_convention"] = w.convention;
    c.manifest.results["wigner_padding_delta"] = num(w.padding_delta);
    if (!w.warning.empty()) c.manifest.warnings.push_back(w.warning);
}

int cmd_compare(const std::string& a, const std::string& b, double abs_tol, double rel_tol) {
    const RunManifest A = RunManifest::load(a);
    const RunManifest B = RunManifest::load(b);
    CompareTolerances tol;
    tol.abs = abs_tol;
    tol.rel = rel_tol;
    const CompareReport rep = compare_runs(A, B, tol);
    for (const auto& r : rep.rows) {
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.path << " a=" << (r.a ? fmt17(*r.a) : "null")
                  << " b=" << (r.b ? fmt17(*r.b) : "null") << " delta=" << fmt17(r.delta) << " tol=" << fmt17(r.tolerance)
                  << "\n";
    }
    std::cout << rep.rows.size() - rep.failures() << "/" << rep.rows.size() << " fields within tolerance\n";
    if (!rep.all_pass())
        throw Error(ErrorKind::comparison, std::to_string(rep.failures()) + " field(s) outside tolerance");
    return 0;
}

void report_error(const std::string& kind, const std::string& message, int code) {
    Json j = {{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
    std::cerr << j.dump() << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"squidmech: tripartite transmon-mechanics simulator"};
    app.require_subcommand(1);
    CommonOptions common;
    std::string plan_mode = "amplitudes", target, plan_path, sweep_kind, sweep_values;
    int select_k = 0;
    std::string cmp_a, cmp_b;
    double abs_tol = 0.0, rel_tol = 0.0;

    auto add_common = [&](CLI::App* s) {
        s->add_option("--config", common.config, "configuration file");
        s->add_option("--out", common.out, "output directory");
        s->add_option("--phonon-dim", common.phonon_dim, "phonon truncation");
        s->add_option("--flags", common.flags, "Hamiltonian terms, comma separated");
        s->add_option("--snapshot-times", common.snapshot_times, "snapshot times in ns, comma separated");
        s->add_flag("--seedless", common.seedless, "runs are always deterministic; accepted for scripts");
    };
    std::vector<std::pair<std::string, std::string>> subs = {
        {"couplings", "coupling strengths versus flux bias"},
        {"cool", "stroboscopic ground-state cooling"},
        {"fock", "single-phonon Fock state preparation"},
        {"ghz", "tripartite GHZ state preparation"},
        {"bell", "qubit-phonon Bell state preparation"},
        {"superpose", "alternating-configuration phonon superpositions"},
        {"plan", "solve protocol times for a target state"},
        {"sweep", "robustness sweep"},
        {"wigner", "phonon Wigner function of a protocol outcome"},
    };
    std::map<std::string, CLI::App*> cmds;
    for (const auto& [name, help] : subs) {
        cmds[name] = app.add_subcommand(name, help);
        add_common(cmds[name]);
    }
    cmds["plan"]->add_option("--target", target, "target as n:p[@phase],...");
    cmds["plan"]->add_option("--mode", plan_mode, "amplitudes | distribution | arbitrary")
        ->check(CLI::IsMember({"amplitudes", "distribution", "arbitrary"}));
    cmds["plan"]->add_option("--select", select_k, "simulate the K most promising solutions and keep the best");
    cmds["superpose"]->add_option("--plan", plan_path, "manifest written by 'plan'");
    cmds["superpose"]->add_option("--target", target, "target as n:p[@phase],...");
    cmds["sweep"]->add_option("--kind", sweep_kind, "stray_J | detuning | coherence")
        ->check(CLI::IsMember({"stray_J", "detuning", "coherence"}));
    cmds["sweep"]->add_option("--values", sweep_values, "values (Hz, or s for coherence), comma separated");
    auto* cmp = app.add_subcommand("compare", "compare two run manifests");
    cmp->add_option("a", cmp_a, "first manifest")->required();
    cmp->add_option("b", cmp_b, "second manifest")->required();
    cmp->add_option("--abs-tol", abs_tol, "absolute tolerance");
    cmp->add_option("--rel-tol", rel_tol, "relative tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ErrorKind::usage);
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::optional<Context> ctx;
    try {
        if (cmp->parsed()) return cmd_compare(cmp_a, cmp_b, abs_tol, rel_tol);
        std::string sub;
        for (const auto& [name, s] : cmds)
            if (s->parsed()) sub = name;
        ctx.emplace(make_context(sub, common));
        Context& c = *ctx;
        if (!target.empty()) {
            c.cfg.protocol.target = target;
            c.manifest.config = config_json(c.cfg);
        }
        if (!sweep_kind.empty()) c.cfg.protocol.sweep_kind = sweep_kind;
        if (!sweep_values.empty()) c.cfg.protocol.sweep_values = detail::parse_list(sweep_values);
        if (!sweep_kind.empty() || !sweep_values.empty()) c.manifest.config = config_json(c.cfg);

        if (sub == "couplings") cmd_couplings(c);
        else if (sub == "cool") cmd_cool(c);
        else if (sub == "fock") cmd_fock(c, FockTarget::fock);
        else if (sub == "ghz") cmd_fock(c, FockTarget::ghz);
        else if (sub == "bell") cmd_fock(c, FockTarget::bell);
        else if (sub == "superpose") cmd_superpose(c, plan_path);
        else if (sub == "plan") cmd_plan(c, plan_mode, select_k);
        else if (sub == "sweep") cmd_sweep(c);
        else if (sub == "wigner") cmd_wigner(c);
        c.manifest.save(c.out / "manifest.json");
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << sub << ": done in " << secs << " s, outputs in " << c.out.string() << "\n";
        std::cout << c.manifest.results.dump(2) << "\n";
        return 0;
    } catch (const Error& e) {
        report_error(error_kind_name(e.kind()), e.what(), e.exit_code());
        if (ctx) {
            ctx->manifest.error = ManifestError{error_kind_name(e.kind()), e.what(), e.exit_code()};
            try {
                ctx->manifest.save(ctx->out / "manifest.json");
            } catch (...) {
            }
        }
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        report_error("io", e.what(), static_cast<int>(ErrorKind::io));
        return static_cast<int>(ErrorKind::io);
    } catch (const std::exception& e) {
        report_error("internal", e.what(), exit_internal);
        return exit_internal;
    }
}
