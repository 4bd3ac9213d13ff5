#pragma once

// Command orchestration behind the CLI binary.  Kept header-side so the
// whole pipeline is testable in-process without spawning the tool.
//
// Commands
//   check        evaluate selected oscillation criteria, write per-theorem
//                reports and a four-row summary
//   hypotheses   sample (H1)-(H3) and report violations with witnesses
//   simulate     run the 1-D PDE, reduce to v(t), detect sign changes
//   reduce       integrate the reduced functional equation directly
//   report       check + hypotheses + reduce in one bundle
//
// Exit codes: 0 evaluation completed (whatever the verdicts), 2 bad
// configuration, 3 numeric failure.  Every failure is also written as a
// structured diagnostic (error.json) when the output directory is usable.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oscwave/config.hpp"
#include "oscwave/criteria.hpp"
#include "oscwave/plot_svg.hpp"
#include "oscwave/problem.hpp"
#include "oscwave/reduction.hpp"
#include "oscwave/report_json.hpp"
#include "oscwave/sim.hpp"

namespace oscwave {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

struct RunConfig {
    std::string problem_path;  // exactly one of problem_path / example_id
    std::string example_id;
    std::string command = "check";
    std::vector<std::string> theorems = all_theorem_ids();

    std::optional<std::string> b_expr;  // tuning overrides; file/defaults otherwise
    std::optional<std::string> tau_expr;
    std::optional<double> beta;

    double t_end = 0.0;  // 0: t0 + 20
    double dt = 1e-3;
    int nx = 101;
    double epsilon = 1e-2;
    double v0 = 1.0;
    double v0_prime = 0.0;

    std::string out_dir = ".";
    std::vector<std::string> formats = {"json", "csv"};
    bool skip_hypotheses = false;
};

namespace detail {

struct RunError : std::runtime_error {
    int code;
    RunError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

inline bool has_format(const RunConfig& cfg, const std::string& f) {
    return std::find(cfg.formats.begin(), cfg.formats.end(), f) != cfg.formats.end();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw RunError(kExitConfig, "cannot write " + p.string());
    out << content;
}

inline std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string trace_csv(const SimulationTrace& trace) {
    std::string out = "t,x,u\n";
    for (std::size_t j = 0; j < trace.t.size(); ++j)
        for (std::size_t i = 0; i < trace.x.size(); ++i) {
            out += csv_num(trace.t[j]);
            out += ',';
            out += csv_num(trace.x[i]);
            out += ',';
            out += csv_num(trace.u[j][i]);
            out += '\n';
        }
    return out;
}

inline std::string reduced_csv(const Trajectory& traj) {
    std::string out = "t,v,vprime\n";
    for (std::size_t j = 0; j < traj.t.size(); ++j) {
        out += csv_num(traj.t[j]);
        out += ',';
        out += csv_num(traj.v[j]);
        out += ',';
        out += csv_num(traj.vprime[j]);
        out += '\n';
    }
    return out;
}

/// "case (1)" / "case (2)" prefix of the principal-weight note, when the
/// theorem 2.4 report selected a case.
inline std::string case_prefix(const CriterionReport& rep) {
    for (const auto& c : rep.conditions) {
        if (c.label.rfind("(i) principal weight integral", 0) == 0 &&
            c.note.rfind("case (", 0) == 0) {
            auto close = c.note.find(')');
            if (close != std::string::npos) return c.note.substr(0, close + 1);
        }
    }
    return {};
}

struct SummaryRow {
    std::string theorem;
    std::string verdict;  // rendered: Oscillatory | Inconclusive | Skipped(...)
};

inline void print_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << "\ntheorem  verdict\n";
    for (const auto& r : rows) out << r.theorem << "      " << r.verdict << "\n";
}

inline std::string hypothesis_gate_reason(const HypothesisReport& rep) {
    std::string reason;
    for (const auto& e : rep.entries) {
        if (e.verdict != HypothesisEntry::Verdict::Violated) continue;
        if (!reason.empty()) reason += "; ";
        reason += "hypothesis (" + std::string(hypothesis_name(e.id)) + ") violated";
        if (!e.witnesses.empty()) {
            const auto& w = e.witnesses.front();
            reason += ": " + w.inequality + " fails at t = " + format_double(w.t);
            if (w.x) reason += ", x = " + format_double(*w.x);
        }
    }
    return reason;
}

inline void print_hypotheses(std::ostream& out, const HypothesisReport& rep) {
    out << "hypotheses sampled on t in [" << format_double(rep.t_lo) << ", "
        << format_double(rep.t_hi) << "] (" << rep.n_t << " x " << rep.n_x << " grid)\n";
    for (const auto& e : rep.entries) {
        out << "  (" << hypothesis_name(e.id) << ") " << verdict_name(e.verdict);
        if (!e.note.empty()) out << ": " << e.note;
        out << "\n";
        if (e.verdict == HypothesisEntry::Verdict::Violated && !e.witnesses.empty()) {
            const auto& w = e.witnesses.front();
            out << "      witness: " << w.inequality << " with lhs = " << format_double(w.lhs)
                << ", rhs = " << format_double(w.rhs) << " at t = " << format_double(w.t);
            if (w.x) out << ", x = " << format_double(*w.x);
            out << "\n";
        }
    }
}

struct LoadedRun {
    ProblemSpec spec;
    TuningParams tuning;
    std::string source;  // "example 3.1" or the file path
    double t_end = 0.0;
};

inline LoadedRun load_run(const RunConfig& cfg) {
    if (cfg.problem_path.empty() == cfg.example_id.empty())
        throw RunError(kExitConfig, "exactly one of --problem and --example is required");
    static const std::vector<std::string> commands = {"check", "hypotheses", "simulate",
                                                      "reduce", "report"};
    if (std::find(commands.begin(), commands.end(), cfg.command) == commands.end())
        throw RunError(kExitConfig, "unknown command '" + cfg.command + "'");
    for (const auto& f : cfg.formats)
        if (f != "json" && f != "csv" && f != "svg")
            throw RunError(kExitConfig, "unknown format '" + f + "' (expected json, csv, svg)");
    if (cfg.theorems.empty()) throw RunError(kExitConfig, "no theorem selected");
    for (const auto& id : cfg.theorems) {
        const auto known = all_theorem_ids();
        if (std::find(known.begin(), known.end(), id) == known.end())
            throw RunError(kExitConfig,
                           "unknown theorem '" + id + "' (expected 2.1, 2.2, 2.3, 2.4, all)");
    }
    if (!(cfg.dt > 0.0)) throw RunError(kExitConfig, "dt must be positive");
    if (cfg.nx < 5) throw RunError(kExitConfig, "nx must be at least 5");
    if (!(cfg.epsilon > 0.0)) throw RunError(kExitConfig, "epsilon must be positive");

    LoadedRun run;
    try {
        if (!cfg.example_id.empty()) {
            run.spec = builtin_example(cfg.example_id);
            run.source = "example " + cfg.example_id;
        } else {
            LoadedProblem lp = load_problem(cfg.problem_path);
            run.spec = lp.spec;
            run.tuning = lp.tuning;
            run.source = cfg.problem_path;
        }
    } catch (const SpecError& ex) {
        throw RunError(kExitConfig, ex.what());
    } catch (const ConfigError& ex) {
        throw RunError(kExitConfig, ex.what());
    }
    try {
        if (cfg.b_expr) run.tuning.b = parse_expression(*cfg.b_expr);
        if (cfg.tau_expr) run.tuning.tau = parse_expression(*cfg.tau_expr);
    } catch (const std::exception& ex) {
        throw RunError(kExitConfig, std::string("tuning expression: ") + ex.what());
    }
    if (cfg.beta) run.tuning.beta = *cfg.beta;
    if (!(run.tuning.beta > 0.0)) throw RunError(kExitConfig, "beta must be positive");

    run.t_end = cfg.t_end > 0.0 ? cfg.t_end : run.spec.t0 + 20.0;
    if (!(run.t_end > run.spec.t0))
        throw RunError(kExitConfig, "t-end must exceed t0 = " + format_double(run.spec.t0));
    return run;
}

struct CheckResult {
    std::vector<CriterionReport> reports;                // successfully evaluated
    std::vector<SummaryRow> summary;                     // all four theorems
    std::map<std::string, std::string> failures;         // theorem -> numeric failure
    std::optional<HypothesisReport> hypotheses;
    std::string gate_reason;  // non-empty: theorems were gated off
};

inline CheckResult run_check(const RunConfig& cfg, const LoadedRun& run, std::ostream& out) {
    CheckResult res;
    res.hypotheses = check_hypotheses(run.spec, run.spec.t0, run.spec.t0 + 100.0);
    bool violated = !res.hypotheses->all_satisfied();
    if (violated && cfg.skip_hypotheses) {
        out << "warning: hypothesis sampling found violations; evaluating criteria anyway "
               "(--skip-hypotheses)\n";
    }
    if (violated && !cfg.skip_hypotheses) res.gate_reason = hypothesis_gate_reason(*res.hypotheses);

    for (const auto& id : all_theorem_ids()) {
        bool selected =
            std::find(cfg.theorems.begin(), cfg.theorems.end(), id) != cfg.theorems.end();
        if (!selected) {
            res.summary.push_back({id, "Skipped(not selected)"});
            continue;
        }
        if (!res.gate_reason.empty()) {
            res.summary.push_back({id, "Skipped(" + res.gate_reason + ")"});
            continue;
        }
        try {
            CriterionReport rep = check_theorem(run.spec, id, run.tuning);
            std::string verdict = verdict_name(rep.overall);
            if (id == "2.4") {
                std::string prefix = case_prefix(rep);
                if (!prefix.empty()) verdict = prefix + ": " + verdict;
            }
            res.summary.push_back({id, verdict});
            res.reports.push_back(std::move(rep));
        } catch (const std::exception& ex) {
            res.failures[id] = ex.what();
            res.summary.push_back({id, "Skipped(numeric failure: " + std::string(ex.what()) + ")"});
        }
    }
    return res;
}

inline std::string summary_json(const RunConfig& cfg, const LoadedRun& run,
                                const CheckResult& res) {
    json::Writer w;
    w.begin_object();
    w.kv("problem", run.source);
    w.kv("command", cfg.command);
    w.kv("skip_hypotheses", cfg.skip_hypotheses);
    w.key("theorems");
    w.begin_array();
    for (const auto& row : res.summary) {
        w.begin_object();
        w.kv("theorem", row.theorem);
        w.kv("verdict", row.verdict);
        w.end_object();
    }
    w.end_array();
    w.end_object();
    return w.str();
}

struct ReduceResult {
    Trajectory traj;
    SignChangeReport signs;
};

inline ReduceResult run_reduce(const LoadedRun& run, const RunConfig& cfg) {
    DerivedCoefficients coef = derive_coefficients(run.spec, run.tuning);
    ReduceResult res;
    res.traj = simulate_reduced(coef.p1, coef.Q, run.spec.m, run.spec.t0, run.t_end, cfg.v0,
                                cfg.v0_prime, cfg.dt);
    res.signs = detect_sign_changes(res.traj.t, res.traj.v);
    return res;
}

inline void print_trajectory_summary(std::ostream& out, const char* what, const Trajectory& traj,
                                     const SignChangeReport& signs) {
    out << what << ": " << traj.t.size() << " samples on [" << format_double(traj.t.front())
        << ", " << format_double(traj.t.back()) << "], dt = " << format_double(traj.dt) << "\n";
    const auto& rx = traj.relax;
    out << "relaxation: " << rx.method << ", " << rx.iterations
        << " sweeps, final delta = " << format_double(rx.final_delta)
        << (rx.converged ? ", converged" : ", NOT converged") << "\n";
    if (!rx.note.empty()) out << "  note: " << rx.note << "\n";
    out << "sign changes: " << signs.count;
    if (signs.first) out << ", first at t = " << format_double(*signs.first);
    out << "\n";
}

}  // namespace detail

inline int run(const RunConfig& cfg, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    namespace fs = std::filesystem;
    fs::path out_dir;

    auto diagnose = [&](const std::string& kind, const std::string& message, int code) {
        err << "error: " << message << "\n";
        if (!out_dir.empty()) {
            json::Writer w;
            w.begin_object();
            w.kv("error", kind);
            w.kv("message", message);
            w.kv("exit_code", code);
            w.end_object();
            std::error_code ec;
            fs::create_directories(out_dir, ec);
            if (!ec) {
                std::ofstream f(out_dir / "error.json", std::ios::binary);
                if (f) f << w.str();
            }
        }
        return code;
    };

    try {
        detail::LoadedRun run = detail::load_run(cfg);
        out_dir = cfg.out_dir.empty() ? fs::path(".") : fs::path(cfg.out_dir);
        {
            std::error_code ec;
            fs::create_directories(out_dir, ec);
            if (ec)
                throw detail::RunError(kExitConfig,
                                       "cannot create output directory " + out_dir.string());
        }
        const bool json_on = detail::has_format(cfg, "json");
        const bool csv_on = detail::has_format(cfg, "csv");
        const bool svg_on = detail::has_format(cfg, "svg");
        out << "problem: " << run.source << " (t0 = " << detail::format_double(run.spec.t0)
            << ")\n";

        // Evaluate first, write files after; a failed run leaves no partial
        // artifacts behind.
        std::vector<std::pair<fs::path, std::string>> artifacts;
        int exit_code = kExitOk;

        if (cfg.command == "hypotheses") {
            HypothesisReport rep = check_hypotheses(run.spec, run.spec.t0, run.spec.t0 + 100.0);
            detail::print_hypotheses(out, rep);
            if (json_on) {
                json::Writer w;
                json::write_hypothesis_report(w, rep);
                artifacts.emplace_back(out_dir / "hypotheses.json", w.str());
            }
        } else if (cfg.command == "check" || cfg.command == "report") {
            detail::CheckResult res = detail::run_check(cfg, run, out);
            detail::print_hypotheses(out, *res.hypotheses);
            if (json_on) {
                json::Writer hw;
                json::write_hypothesis_report(hw, *res.hypotheses);
                artifacts.emplace_back(out_dir / "hypotheses.json", hw.str());
                for (const auto& rep : res.reports) {
                    json::Writer w;
                    json::write_criterion_report(w, rep);
                    artifacts.emplace_back(out_dir / ("report_" + rep.theorem_id + ".json"),
                                           w.str());
                }
                artifacts.emplace_back(out_dir / "summary.json",
                                       detail::summary_json(cfg, run, res));
            }
            detail::print_summary(out, res.summary);
            if (!res.failures.empty()) exit_code = kExitNumeric;

            if (cfg.command == "report") {
                detail::ReduceResult red = detail::run_reduce(run, cfg);
                detail::print_trajectory_summary(out, "reduced trajectory", red.traj, red.signs);
                if (csv_on)
                    artifacts.emplace_back(out_dir / "reduced.csv",
                                           detail::reduced_csv(red.traj));
                if (json_on) {
                    json::Writer w;
                    json::write_sign_changes(w, red.signs);
                    artifacts.emplace_back(out_dir / "sign_changes.json", w.str());
                }
                if (svg_on) {
                    PlotOptions popt;
                    popt.title = "reduced v(t), " + run.source;
                    artifacts.emplace_back(
                        out_dir / "v_plot.svg",
                        render_line_plot(red.traj.t, red.traj.v, red.signs.crossings, popt));
                }
            }
        } else if (cfg.command == "reduce") {
            detail::ReduceResult red = detail::run_reduce(run, cfg);
            detail::print_trajectory_summary(out, "reduced trajectory", red.traj, red.signs);
            if (csv_on)
                artifacts.emplace_back(out_dir / "reduced.csv", detail::reduced_csv(red.traj));
            if (json_on) {
                json::Writer w;
                json::write_sign_changes(w, red.signs);
                artifacts.emplace_back(out_dir / "sign_changes.json", w.str());
            }
            if (svg_on) {
                PlotOptions popt;
                popt.title = "reduced v(t), " + run.source;
                artifacts.emplace_back(
                    out_dir / "v_plot.svg",
                    render_line_plot(red.traj.t, red.traj.v, red.signs.crossings, popt));
            }
        } else {  // simulate
            SimulationTrace trace = simulate_pde(run.spec, cfg.nx, cfg.dt, run.spec.t0,
                                                 run.t_end, RelaxOptions{}, {}, {},
                                                 Formulation::Auto, cfg.epsilon);
            Trajectory red = reduce_trace(trace, run.spec.alpha, run.spec.bc);
            SignChangeReport signs = detect_sign_changes(red.t, red.v);
            out << "grid: " << trace.x.size() << " x " << trace.t.size()
                << " nodes, dx = " << detail::format_double(trace.dx)
                << ", dt = " << detail::format_double(trace.dt) << ", formulation "
                << trace.formulation << "\n";
            if (trace.cfl_dt_limit > 0.0 && trace.dt > trace.cfl_dt_limit)
                out << "warning: dt exceeds the CFL estimate "
                    << detail::format_double(trace.cfl_dt_limit) << "\n";
            detail::print_trajectory_summary(out, "reduced trajectory", red, signs);
            if (csv_on) {
                artifacts.emplace_back(out_dir / "trace.csv", detail::trace_csv(trace));
                artifacts.emplace_back(out_dir / "reduced.csv", detail::reduced_csv(red));
            }
            if (json_on) {
                json::Writer w;
                w.begin_object();
                w.key("sign_changes");
                json::write_sign_changes(w, signs);
                w.key("relaxation");
                json::write_relaxation(w, trace.relax);
                w.kv("formulation", trace.formulation);
                w.kv("cfl_dt_limit", trace.cfl_dt_limit);
                w.end_object();
                artifacts.emplace_back(out_dir / "sign_changes.json", w.str());
            }
            if (svg_on) {
                PlotOptions popt;
                popt.title = "reduced v(t), " + run.source;
                artifacts.emplace_back(out_dir / "v_plot.svg",
                                       render_line_plot(red.t, red.v, signs.crossings, popt));
            }
        }

        for (const auto& [path, content] : artifacts) detail::write_file(path, content);
        if (!artifacts.empty()) {
            out << "wrote:";
            for (const auto& [path, content] : artifacts) out << " " << path.filename().string();
            out << "\n";
        }
        return exit_code;
    } catch (const detail::RunError& ex) {
        return diagnose(ex.code == kExitConfig ? "config" : "numeric", ex.what(), ex.code);
    } catch (const ConfigError& ex) {
        return diagnose("config", ex.what(), kExitConfig);
    } catch (const SpecError& ex) {
        return diagnose("config", ex.what(), kExitConfig);
    } catch (const std::exception& ex) {
        return diagnose("numeric", ex.what(), kExitNumeric);
    }
}

}  // namespace oscwave
