#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "oscwave/config.hpp"
#include "oscwave/plot_svg.hpp"
#include "oscwave/run.hpp"

using namespace oscwave;
namespace fs = std::filesystem;

namespace {

std::string fixture_path(const std::string& name) {
    return std::string(OSCWAVE_FIXTURE_DIR) + "/" + name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("oscwave_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void expect_specs_equal(const ProblemSpec& got, const ProblemSpec& want) {
    CHECK(got.alpha.num == want.alpha.num);
    CHECK(got.alpha.den == want.alpha.den);
    CHECK(unparse(got.r) == unparse(want.r));
    CHECK(unparse(got.p) == unparse(want.p));
    CHECK(unparse(got.p_hat) == unparse(want.p_hat));
    CHECK(unparse(got.q) == unparse(want.q));
    CHECK(unparse(got.f_coef()) == unparse(want.f_coef()));
    CHECK(unparse(got.a) == unparse(want.a));
    CHECK(unparse(got.a_family) == unparse(want.a_family));
    CHECK(got.family_count == want.family_count);
    CHECK(unparse(got.m) == unparse(want.m));
    CHECK(unparse(got.eta) == unparse(want.eta));
    CHECK(is_dirichlet(got.bc) == is_dirichlet(want.bc));
    if (!is_dirichlet(want.bc))
        CHECK(unparse(std::get<RobinBc>(got.bc).psi) ==
              unparse(std::get<RobinBc>(want.bc).psi));
    CHECK(got.domain.lo() == want.domain.lo());
    CHECK(got.domain.hi() == want.domain.hi());
    CHECK(got.t0 == want.t0);
}

}  // namespace

TEST_CASE("fixture files reproduce the builtin examples field-wise", "[cli]") {
    expect_specs_equal(load_problem(fixture_path("example31.cfg")).spec, builtin_example("3.1"));
    expect_specs_equal(load_problem(fixture_path("example32.cfg")).spec, builtin_example("3.2"));
}

TEST_CASE("save after load is byte-identical on canonical fixtures", "[cli]") {
    for (const char* name : {"example31.cfg", "example32.cfg"}) {
        std::string bytes = slurp(fixture_path(name));
        LoadedProblem lp = load_problem_text(bytes);
        CHECK(save_problem(lp.spec, lp.tuning) == bytes);
    }
}

TEST_CASE("loader canonicalizes key order, comments, and spacing", "[cli]") {
    std::string messy =
        "; reordered and commented variant\n"
        "[time]\n t0 = 1\n"
        "[domain]\nx_hi = 1 # upper edge\nx_lo = 0\n"
        "[equation]\n"
        "eta = t/2\nm = 2*t\ns = 3\na_k = 3+cos(k*t)\na = 1\nf_coef = 2\n"
        "q = 1\np_hat = 1\np = 1\nr = t\nalpha = 5\n"
        "[boundary]\nkind = robin\npsi = t\n";
    LoadedProblem lp = load_problem_text(messy);
    CHECK(save_problem(lp.spec, lp.tuning) == slurp(fixture_path("example31.cfg")));
}

TEST_CASE("missing keys are reported by name", "[cli]") {
    std::string text = slurp(fixture_path("example31.cfg"));
    auto cut = text.find("alpha = 5/1\n");
    text.erase(cut, 12);
    try {
        load_problem_text(text);
        FAIL("expected ConfigError");
    } catch (const ConfigError& ex) {
        CHECK(std::string(ex.what()).find("alpha") != std::string::npos);
    }
}

TEST_CASE("malformed expressions carry the offset", "[cli]") {
    std::string text = slurp(fixture_path("example31.cfg"));
    auto cut = text.find("r = t\n");
    text.replace(cut, 6, "r = t+*\n");
    try {
        load_problem_text(text);
        FAIL("expected ConfigError");
    } catch (const ConfigError& ex) {
        std::string msg = ex.what();
        CHECK(msg.find("offset") != std::string::npos);
        CHECK(msg.find("[equation] r") != std::string::npos);
    }
}

TEST_CASE("structural errors are rejected", "[cli]") {
    CHECK_THROWS_AS(load_problem_text("[junk]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(load_problem_text("alpha = 5\n"), ConfigError);          // key before section
    CHECK_THROWS_AS(load_problem_text("[equation]\nalpha = 5\nalpha = 3\n"),  // duplicate
                    ConfigError);
    CHECK_THROWS_AS(load_problem("nope/missing.cfg"), ConfigError);
    std::string dirichlet_psi = slurp(fixture_path("example32.cfg"));
    auto cut = dirichlet_psi.find("kind = dirichlet\n");
    dirichlet_psi.replace(cut, 17, "kind = dirichlet\npsi = t\n");
    CHECK_THROWS_AS(load_problem_text(dirichlet_psi), ConfigError);
}

TEST_CASE("m below t loads but trips the deviation hypothesis", "[cli]") {
    std::string text = slurp(fixture_path("example31.cfg"));
    auto cut = text.find("m = 2*t\n");
    text.replace(cut, 8, "m = t-1\n");
    LoadedProblem lp = load_problem_text(text);
    HypothesisReport rep = check_hypotheses(lp.spec, lp.spec.t0, lp.spec.t0 + 10.0);
    const auto& h2 = rep.entry(HypothesisId::H2);
    CHECK(h2.verdict == HypothesisEntry::Verdict::Violated);
    REQUIRE_FALSE(h2.witnesses.empty());
    CHECK(h2.witnesses.front().lhs < h2.witnesses.front().rhs);
}

TEST_CASE("check command writes reports and the case-labelled summary", "[cli]") {
    fs::path dir = fresh_dir("check31");
    RunConfig cfg;
    cfg.example_id = "3.1";
    cfg.skip_hypotheses = true;
    cfg.out_dir = dir.string();
    std::ostringstream out, err;
    int rc = run(cfg, out, err);
    CHECK(rc == kExitOk);
    CHECK(out.str().find("case (1): Oscillatory") != std::string::npos);
    CHECK(out.str().find("warning") != std::string::npos);

    auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
    REQUIRE(summary["theorems"].size() == 4);
    CHECK(summary["theorems"][3]["verdict"] == "case (1): Oscillatory");
    CHECK(summary["skip_hypotheses"] == true);

    auto rep = nlohmann::json::parse(slurp(dir / "report_2.1.json"));
    CHECK(rep["overall"] == "Oscillatory");
    CHECK(rep["conditions"].size() == 3);
    CHECK(rep["conditions"][0]["divergence"]["kind"] == "divergent");

    auto hyp = nlohmann::json::parse(slurp(dir / "hypotheses.json"));
    CHECK(hyp["all_satisfied"] == false);
    CHECK(hyp["entries"][0]["verdict"] == "Violated");
}

TEST_CASE("hypothesis gate skips theorems unless overridden", "[cli]") {
    fs::path dir = fresh_dir("gate31");
    RunConfig cfg;
    cfg.example_id = "3.1";
    cfg.out_dir = dir.string();
    std::ostringstream out, err;
    int rc = run(cfg, out, err);
    CHECK(rc == kExitOk);
    auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
    for (const auto& row : summary["theorems"]) {
        std::string verdict = row["verdict"];
        CHECK(verdict.rfind("Skipped(hypothesis (H1) violated", 0) == 0);
    }
    CHECK(!fs::exists(dir / "report_2.1.json"));
}

TEST_CASE("summary always lists all four theorems", "[cli]") {
    fs::path dir = fresh_dir("select32");
    RunConfig cfg;
    cfg.example_id = "3.2";
    cfg.theorems = {"2.4"};
    cfg.skip_hypotheses = true;
    cfg.out_dir = dir.string();
    std::ostringstream out, err;
    CHECK(run(cfg, out, err) == kExitOk);
    auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
    REQUIRE(summary["theorems"].size() == 4);
    CHECK(summary["theorems"][0]["verdict"] == "Skipped(not selected)");
    CHECK(summary["theorems"][3]["verdict"] == "case (2): Oscillatory");
    CHECK(!fs::exists(dir / "report_2.1.json"));
    CHECK(fs::exists(dir / "report_2.4.json"));
}

TEST_CASE("config errors exit 2 before any evaluation", "[cli]") {
    std::ostringstream out, err;
    RunConfig both;
    both.example_id = "3.1";
    both.problem_path = "x.cfg";
    CHECK(run(both, out, err) == kExitConfig);

    RunConfig neither;
    CHECK(run(neither, out, err) == kExitConfig);

    RunConfig missing;
    missing.problem_path = "definitely/missing.cfg";
    CHECK(run(missing, out, err) == kExitConfig);

    RunConfig badth;
    badth.example_id = "3.1";
    badth.theorems = {"9.9"};
    CHECK(run(badth, out, err) == kExitConfig);

    RunConfig badfmt;
    badfmt.example_id = "3.1";
    badfmt.formats = {"pdf"};
    CHECK(run(badfmt, out, err) == kExitConfig);

    RunConfig badex;
    badex.example_id = "4.7";
    CHECK(run(badex, out, err) == kExitConfig);

    RunConfig badbeta;
    badbeta.example_id = "3.1";
    badbeta.beta = -1.0;
    CHECK(run(badbeta, out, err) == kExitConfig);
    CHECK(err.str().find("error:") != std::string::npos);
}

TEST_CASE("numeric failures exit 3 and are diagnosed", "[cli]") {
    fs::path dir = fresh_dir("numfail");
    RunConfig cfg;
    cfg.example_id = "3.1";
    cfg.theorems = {"2.3"};
    cfg.skip_hypotheses = true;
    cfg.b_expr = "t-2";  // crosses zero inside the probe window
    cfg.out_dir = dir.string();
    std::ostringstream out, err;
    CHECK(run(cfg, out, err) == kExitNumeric);
    CHECK(out.str().find("Skipped(numeric failure") != std::string::npos);
}

TEST_CASE("reports are byte-identical across runs", "[cli]") {
    fs::path d1 = fresh_dir("det1"), d2 = fresh_dir("det2");
    for (const fs::path& dir : {d1, d2}) {
        RunConfig cfg;
        cfg.example_id = "3.2";
        cfg.theorems = {"2.4"};
        cfg.skip_hypotheses = true;
        cfg.out_dir = dir.string();
        std::ostringstream out, err;
        REQUIRE(run(cfg, out, err) == kExitOk);
    }
    for (const char* name : {"report_2.4.json", "summary.json", "hypotheses.json"})
        CHECK(slurp(d1 / name) == slurp(d2 / name));
}

TEST_CASE("reduce writes trajectory artifacts", "[cli]") {
    fs::path dir = fresh_dir("reduce31");
    RunConfig cfg;
    cfg.example_id = "3.1";
    cfg.command = "reduce";
    cfg.t_end = 12.0;
    cfg.dt = 1e-3;
    cfg.formats = {"json", "csv", "svg"};
    cfg.out_dir = dir.string();
    std::ostringstream out, err;
    CHECK(run(cfg, out, err) == kExitOk);

    std::string csv = slurp(dir / "reduced.csv");
    CHECK(csv.rfind("t,v,vprime\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 11002);  // header + nodes

    auto signs = nlohmann::json::parse(slurp(dir / "sign_changes.json"));
    CHECK(signs["count"] == signs["crossings"].size());

    std::string svg = slurp(dir / "v_plot.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("<polyline") != std::string::npos);
}

TEST_CASE("line plot marks crossings and scales data", "[cli]") {
    std::vector<double> t = {0.0, 1.0, 2.0, 3.0};
    std::vector<double> v = {1.0, -1.0, 1.0, -1.0};
    std::string svg = render_line_plot(t, v, {0.5, 1.5, 2.5});
    CHECK(std::count(svg.begin(), svg.end(), '\n') > 10);
    std::size_t circles = 0;
    for (std::size_t pos = svg.find("<circle"); pos != std::string::npos;
         pos = svg.find("<circle", pos + 1))
        ++circles;
    CHECK(circles == 3);
    CHECK_THROWS(render_line_plot({1.0}, {1.0}, {}));
}

TEST_CASE("cli binary honours the exit-code contract", "[cli]") {
    fs::path dir = fresh_dir("binary");
    std::string cli = OSCWAVE_CLI_PATH;
    auto shell = [&](const std::string& args) {
        std::string cmd = cli + " " + args + " > " + (dir / "stdout.txt").string() + " 2>&1";
        int raw = std::system(cmd.c_str());
        return WEXITSTATUS(raw);
    };
    CHECK(shell("check --problem missing.cfg --out " + (dir / "a").string()) == 2);
    CHECK(shell("check --example 3.1 --theorem 2.4 --skip-hypotheses --out " +
                (dir / "b").string()) == 0);
    std::string text = slurp(dir / "stdout.txt");
    CHECK(text.find("case (1): Oscillatory") != std::string::npos);
    CHECK(shell("check --example 3.1 --example 3.2") == 2);  // flag misuse
    CHECK(shell("frobnicate --example 3.1") == 2);
}
