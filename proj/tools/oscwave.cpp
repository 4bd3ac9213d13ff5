// Command-line front end: flag parsing only, all behavior lives in run().

#include <CLI11.hpp>

#include "oscwave/run.hpp"

int main(int argc, char** argv) {
    CLI::App app{"oscillation criteria and simulation cross-checks for damped "
                 "quasilinear wave equations with deviating arguments"};
    app.require_subcommand(1);

    oscwave::RunConfig cfg;
    std::string theorem = "all";
    std::string formats = "json,csv";

    auto add_problem_flags = [&](CLI::App* sub) {
        auto* p = sub->add_option("--problem", cfg.problem_path, "problem config file");
        auto* e = sub->add_option("--example", cfg.example_id, "builtin example id (3.1, 3.2)");
        p->excludes(e);
        sub->add_option("--out", cfg.out_dir, "output directory (default .)");
        sub->add_option("--format", formats, "comma list of json,csv,svg (default json,csv)");
        sub->add_option("--b", cfg.b_expr, "tuning function b(t), expression in t");
        sub->add_option("--tau", cfg.tau_expr, "tuning deviation tau(t), expression in t");
        sub->add_option("--beta", cfg.beta, "tuning window width beta > 0");
    };
    auto add_window_flags = [&](CLI::App* sub) {
        sub->add_option("--t-end", cfg.t_end, "end of the time window (default t0 + 20)");
        sub->add_option("--dt", cfg.dt, "time step (default 1e-3)");
    };

    auto* check = app.add_subcommand("check", "evaluate the oscillation criteria");
    add_problem_flags(check);
    check->add_option("--theorem", theorem, "2.1, 2.2, 2.3, 2.4 or all (default all)");
    check->add_flag("--skip-hypotheses", cfg.skip_hypotheses,
                    "evaluate criteria even when (H1)-(H3) sampling fails");

    auto* hyp = app.add_subcommand("hypotheses", "sample the standing hypotheses");
    add_problem_flags(hyp);

    auto* sim = app.add_subcommand("simulate", "run the 1-D PDE and reduce to v(t)");
    add_problem_flags(sim);
    add_window_flags(sim);
    sim->add_option("--nx", cfg.nx, "spatial nodes (default 101)");
    sim->add_option("--epsilon", cfg.epsilon, "regularization floor (default 1e-2)");

    auto* red = app.add_subcommand("reduce", "integrate the reduced functional equation");
    add_problem_flags(red);
    add_window_flags(red);
    red->add_option("--v0", cfg.v0, "initial value v(t0) (default 1)");
    red->add_option("--v0-prime", cfg.v0_prime, "initial slope v'(t0) (default 0)");

    auto* rep = app.add_subcommand("report", "criteria, hypotheses and reduced run in one bundle");
    add_problem_flags(rep);
    add_window_flags(rep);
    rep->add_option("--theorem", theorem, "2.1, 2.2, 2.3, 2.4 or all (default all)");
    rep->add_flag("--skip-hypotheses", cfg.skip_hypotheses,
                  "evaluate criteria even when (H1)-(H3) sampling fails");
    rep->add_option("--v0", cfg.v0, "initial value v(t0) (default 1)");
    rep->add_option("--v0-prime", cfg.v0_prime, "initial slope v'(t0) (default 0)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : oscwave::kExitConfig;
    }

    cfg.command = app.get_subcommands().front()->get_name();

    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : s) {
            if (c == ',') {
                if (!cur.empty()) out.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!cur.empty()) out.push_back(cur);
        return out;
    };
    cfg.formats = split(formats);
    cfg.theorems = theorem == "all" ? oscwave::all_theorem_ids() : split(theorem);

    return oscwave::run(cfg);
}
