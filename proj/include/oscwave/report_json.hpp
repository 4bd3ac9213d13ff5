#pragma once

// Deterministic JSON emission for reports.
//
// Hand-rolled writer so the byte stream is fully pinned: keys in fixed
// order, floats always printed with 17 significant digits, no locale
// dependence.  Two runs with the same config must produce identical files.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "oscwave/criteria.hpp"
#include "oscwave/problem.hpp"
#include "oscwave/quad.hpp"
#include "oscwave/sim.hpp"

namespace oscwave {
namespace json {

inline std::string number(double v) {
    if (std::isnan(v)) return "null";
    if (std::isinf(v)) return v > 0 ? "1e999" : "-1e999";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out = "\"";
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    out += '"';
    return out;
}

/// Nested-structure builder; emits keys in call order, so serializers below
/// define the canonical order.
class Writer {
  public:
    std::string str() const { return out_; }

    void begin_object() { open('{'); }
    void end_object() { close('}'); }
    void begin_array() { open('['); }
    void end_array() { close(']'); }

    void key(const std::string& k) {
        comma();
        out_ += escape(k);
        out_ += ':';
        just_keyed_ = true;
    }
    void value(const std::string& s) {
        comma();
        out_ += escape(s);
    }
    void value(const char* s) { value(std::string(s)); }
    void value(double v) {
        comma();
        out_ += number(v);
    }
    void value(int v) {
        comma();
        out_ += std::to_string(v);
    }
    void value(std::size_t v) {
        comma();
        out_ += std::to_string(v);
    }
    void value(bool b) {
        comma();
        out_ += b ? "true" : "false";
    }
    void null() {
        comma();
        out_ += "null";
    }

    void kv(const std::string& k, const std::string& v) { key(k), value(v); }
    void kv(const std::string& k, const char* v) { key(k), value(v); }
    void kv(const std::string& k, double v) { key(k), value(v); }
    void kv(const std::string& k, int v) { key(k), value(v); }
    void kv(const std::string& k, std::size_t v) { key(k), value(v); }
    void kv(const std::string& k, bool v) { key(k), value(v); }

  private:
    void comma() {
        if (just_keyed_) {
            just_keyed_ = false;
            return;
        }
        if (!out_.empty() && out_.back() != '{' && out_.back() != '[' && out_.back() != ':')
            out_ += ',';
    }
    void open(char c) {
        comma();
        out_ += c;
        just_keyed_ = false;
    }
    void close(char c) {
        out_ += c;
        just_keyed_ = false;
    }

    std::string out_;
    bool just_keyed_ = false;
};

inline const char* kind_name(DivergenceVerdict::Kind k) {
    switch (k) {
        case DivergenceVerdict::Kind::Divergent: return "divergent";
        case DivergenceVerdict::Kind::Convergent: return "convergent";
        default: return "inconclusive";
    }
}

inline void write_probes(Writer& w, const std::vector<ProbePoint>& probes) {
    w.begin_array();
    for (const auto& p : probes) {
        w.begin_object();
        w.kv("T", p.T);
        w.kv("integral", p.integral);
        w.end_object();
    }
    w.end_array();
}

inline void write_divergence(Writer& w, const DivergenceVerdict& d) {
    w.begin_object();
    w.kv("kind", kind_name(d.kind));
    w.kv("direction", d.direction);
    w.kv("growth", growth_name(d.growth));
    w.kv("exponent", d.exponent);
    w.kv("fit_r2", d.fit_r2);
    w.kv("limit_estimate", d.limit_estimate);
    w.kv("error_estimate", d.error_estimate);
    w.kv("tail_sign_change", d.tail_sign_change);
    w.kv("reason", d.reason);
    w.kv("schedule", d.schedule);
    w.key("probes");
    write_probes(w, d.probes);
    w.end_object();
}

inline void write_criterion_report(Writer& w, const CriterionReport& rep) {
    w.begin_object();
    w.kv("theorem", rep.theorem_id);
    w.kv("overall", verdict_name(rep.overall));
    w.kv("parameters", rep.parameters);
    w.key("conditions");
    w.begin_array();
    for (const auto& c : rep.conditions) {
        w.begin_object();
        w.kv("label", c.label);
        w.kv("verdict", verdict_name(c.verdict));
        w.kv("note", c.note);
        w.key("divergence");
        if (c.divergence)
            write_divergence(w, *c.divergence);
        else
            w.null();
        w.key("scan");
        write_probes(w, c.scan);
        w.end_object();
    }
    w.end_array();
    w.end_object();
}

inline void write_hypothesis_report(Writer& w, const HypothesisReport& rep) {
    w.begin_object();
    w.kv("t_lo", rep.t_lo);
    w.kv("t_hi", rep.t_hi);
    w.kv("n_t", rep.n_t);
    w.kv("n_x", rep.n_x);
    w.kv("all_satisfied", rep.all_satisfied());
    w.key("entries");
    w.begin_array();
    for (const auto& e : rep.entries) {
        w.begin_object();
        w.kv("id", hypothesis_name(e.id));
        w.kv("verdict", verdict_name(e.verdict));
        w.kv("note", e.note);
        w.key("witnesses");
        w.begin_array();
        for (const auto& wit : e.witnesses) {
            w.begin_object();
            w.kv("t", wit.t);
            w.key("x");
            if (wit.x)
                w.value(*wit.x);
            else
                w.null();
            w.kv("inequality", wit.inequality);
            w.kv("lhs", wit.lhs);
            w.kv("rhs", wit.rhs);
            w.end_object();
        }
        w.end_array();
        w.end_object();
    }
    w.end_array();
    w.end_object();
}

inline void write_sign_changes(Writer& w, const SignChangeReport& rep) {
    w.begin_object();
    w.kv("count", rep.count);
    w.key("first");
    if (rep.first)
        w.value(*rep.first);
    else
        w.null();
    w.key("crossings");
    w.begin_array();
    for (double c : rep.crossings) w.value(c);
    w.end_array();
    w.end_object();
}

inline void write_relaxation(Writer& w, const RelaxationInfo& r) {
    w.begin_object();
    w.kv("method", r.method);
    w.kv("iterations", r.iterations);
    w.kv("final_delta", r.final_delta);
    w.kv("converged", r.converged);
    w.kv("omega", r.omega);
    w.kv("note", r.note);
    w.end_object();
}

}  // namespace json
}  // namespace oscwave
