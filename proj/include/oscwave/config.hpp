#pragma once

// Problem-file ingestion and canonical serialization.
//
// load_problem        read a sectioned key-value file into a spec + tuning
// load_problem_text   the same from an in-memory string
// save_problem        canonical text form; save(load(x)) is idempotent
//
// Format: INI-style sections [equation], [boundary], [domain], [time],
// [tuning]; `key = value` pairs; `#` and `;` start comments.  Function
// values are expression strings in t, x, k.  Unknown sections or keys are
// errors, as are missing required keys.

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "oscwave/criteria.hpp"
#include "oscwave/problem.hpp"

namespace oscwave {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LoadedProblem {
    ProblemSpec spec;
    TuningParams tuning;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

using Section = std::map<std::string, std::string>;

inline std::map<std::string, Section> parse_sections(const std::string& text) {
    static const std::vector<std::string> known = {"equation", "boundary", "domain", "time",
                                                   "tuning"};
    std::map<std::string, Section> out;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto cut = line.find_first_of("#;");
        if (cut != std::string::npos) line.erase(cut);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            bool ok = false;
            for (const auto& k : known) ok = ok || k == section;
            if (!ok)
                throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" +
                                  section + "]");
            out[section];
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        if (section.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
        if (!out[section].emplace(key, val).second)
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key +
                              "' in [" + section + "]");
    }
    return out;
}

inline const std::string& require_key(const Section& sec, const std::string& section,
                                      const std::string& key) {
    auto it = sec.find(key);
    if (it == sec.end())
        throw ConfigError("missing key '" + key + "' in [" + section + "]");
    return it->second;
}

inline ExprPtr parse_expr_value(const std::string& section, const std::string& key,
                                const std::string& text) {
    try {
        return parse_expression(text);
    } catch (const std::exception& ex) {
        throw ConfigError("[" + section + "] " + key + ": " + ex.what());
    }
}

inline double parse_real(const std::string& section, const std::string& key,
                         const std::string& text) {
    try {
        std::size_t used = 0;
        double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("[" + section + "] " + key + ": not a number: '" + text + "'");
    }
}

inline int parse_int(const std::string& section, const std::string& key,
                     const std::string& text) {
    try {
        std::size_t used = 0;
        int v = std::stoi(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("[" + section + "] " + key + ": not an integer: '" + text + "'");
    }
}

inline OddRatio parse_alpha(const std::string& text) {
    std::string t = trim(text);
    long num = 0, den = 1;
    auto slash = t.find('/');
    try {
        std::size_t used = 0;
        num = std::stol(slash == std::string::npos ? t : t.substr(0, slash), &used);
        if (slash == std::string::npos) {
            if (used != t.size()) throw std::invalid_argument("trailing");
        } else {
            if (used != slash) throw std::invalid_argument("trailing");
            std::string d = t.substr(slash + 1);
            den = std::stol(d, &used);
            if (used != d.size()) throw std::invalid_argument("trailing");
        }
    } catch (const std::exception&) {
        throw ConfigError("[equation] alpha: expected an odd integer or odd/odd ratio, got '" +
                          text + "'");
    }
    return OddRatio{num, den};
}

inline void reject_unknown(const Section& sec, const std::string& name,
                           const std::vector<std::string>& allowed) {
    for (const auto& [k, v] : sec) {
        bool ok = false;
        for (const auto& a : allowed) ok = ok || a == k;
        if (!ok) throw ConfigError("unknown key '" + k + "' in [" + name + "]");
    }
}

}  // namespace detail

inline LoadedProblem load_problem_text(const std::string& text) {
    auto sections = detail::parse_sections(text);
    auto need_section = [&](const char* name) -> const detail::Section& {
        auto it = sections.find(name);
        if (it == sections.end())
            throw ConfigError("missing section [" + std::string(name) + "]");
        return it->second;
    };

    LoadedProblem out;
    ProblemSpec& s = out.spec;
    {
        const auto& eq = need_section("equation");
        detail::reject_unknown(eq, "equation",
                               {"alpha", "r", "p", "p_hat", "q", "f_coef", "a", "a_k", "s", "m",
                                "eta"});
        s.alpha = detail::parse_alpha(detail::require_key(eq, "equation", "alpha"));
        auto expr = [&](const char* key) {
            return detail::parse_expr_value("equation", key,
                                            detail::require_key(eq, "equation", key));
        };
        s.r = expr("r");
        s.p = expr("p");
        s.p_hat = expr("p_hat");
        s.q = expr("q");
        s.a = expr("a");
        s.m = expr("m");
        s.eta = expr("eta");
        s.f_form = PowerLawF{expr("f_coef")};
        s.family_count =
            eq.count("s") ? detail::parse_int("equation", "s", eq.at("s")) : 0;
        if (s.family_count > 0)
            s.a_family = detail::parse_expr_value("equation", "a_k",
                                                  detail::require_key(eq, "equation", "a_k"));
        else if (eq.count("a_k"))
            s.a_family = detail::parse_expr_value("equation", "a_k", eq.at("a_k"));
        else
            s.a_family = parse_expression("0");
    }
    {
        const auto& bd = need_section("boundary");
        detail::reject_unknown(bd, "boundary", {"kind", "psi"});
        std::string kind = detail::require_key(bd, "boundary", "kind");
        if (kind == "robin") {
            s.bc = RobinBc{detail::parse_expr_value("boundary", "psi",
                                                    detail::require_key(bd, "boundary", "psi"))};
        } else if (kind == "dirichlet") {
            if (bd.count("psi"))
                throw ConfigError("[boundary] psi is only meaningful for kind = robin");
            s.bc = DirichletBc{};
        } else {
            throw ConfigError("[boundary] kind must be robin or dirichlet, got '" + kind + "'");
        }
    }
    {
        const auto& dm = need_section("domain");
        detail::reject_unknown(dm, "domain", {"x_lo", "x_hi"});
        double lo = detail::parse_real("domain", "x_lo",
                                       detail::require_key(dm, "domain", "x_lo"));
        double hi = detail::parse_real("domain", "x_hi",
                                       detail::require_key(dm, "domain", "x_hi"));
        try {
            s.domain = Domain::interval(lo, hi);
        } catch (const std::exception& ex) {
            throw ConfigError(std::string("[domain] ") + ex.what());
        }
    }
    {
        const auto& tm = need_section("time");
        detail::reject_unknown(tm, "time", {"t0"});
        s.t0 = detail::parse_real("time", "t0", detail::require_key(tm, "time", "t0"));
    }
    if (sections.count("tuning")) {
        const auto& tu = sections.at("tuning");
        detail::reject_unknown(tu, "tuning", {"b", "tau", "beta"});
        if (tu.count("b")) out.tuning.b = detail::parse_expr_value("tuning", "b", tu.at("b"));
        if (tu.count("tau"))
            out.tuning.tau = detail::parse_expr_value("tuning", "tau", tu.at("tau"));
        if (tu.count("beta"))
            out.tuning.beta = detail::parse_real("tuning", "beta", tu.at("beta"));
    }
    try {
        s.validate();
    } catch (const std::exception& ex) {
        throw ConfigError(ex.what());
    }
    return out;
}

inline LoadedProblem load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open problem file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_problem_text(buf.str());
}

inline std::string save_problem(const ProblemSpec& spec, const TuningParams& tuning = {}) {
    if (std::holds_alternative<CustomF>(spec.f_form))
        throw ConfigError("problem files carry only the power-law forcing form");
    std::ostringstream out;
    out << "[equation]\n";
    out << "alpha = " << spec.alpha.num << "/" << spec.alpha.den << "\n";
    out << "r = " << unparse(spec.r) << "\n";
    out << "p = " << unparse(spec.p) << "\n";
    out << "p_hat = " << unparse(spec.p_hat) << "\n";
    out << "q = " << unparse(spec.q) << "\n";
    out << "f_coef = " << unparse(spec.f_coef()) << "\n";
    out << "a = " << unparse(spec.a) << "\n";
    if (spec.family_count > 0) out << "a_k = " << unparse(spec.a_family) << "\n";
    out << "s = " << spec.family_count << "\n";
    out << "m = " << unparse(spec.m) << "\n";
    out << "eta = " << unparse(spec.eta) << "\n";
    out << "\n[boundary]\n";
    if (auto* robin = std::get_if<RobinBc>(&spec.bc)) {
        out << "kind = robin\n";
        out << "psi = " << unparse(robin->psi) << "\n";
    } else {
        out << "kind = dirichlet\n";
    }
    out << "\n[domain]\n";
    out << "x_lo = " << detail::format_double(spec.domain.lo()) << "\n";
    out << "x_hi = " << detail::format_double(spec.domain.hi()) << "\n";
    out << "\n[time]\n";
    out << "t0 = " << detail::format_double(spec.t0) << "\n";
    out << "\n[tuning]\n";
    out << "b = " << unparse(tuning.b) << "\n";
    out << "tau = " << unparse(tuning.tau) << "\n";
    out << "beta = " << detail::format_double(tuning.beta) << "\n";
    return out.str();
}

}  // namespace oscwave
