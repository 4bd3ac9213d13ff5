#pragma once

// Math-expression language over the variables {t, x, k}: parser, evaluator,
// unparser and numeric differentiation.  Grammar (EBNF):
//
//   expr    = term { ("+" | "-") term } ;
//   term    = factor { ("*" | "/") factor } ;
//   factor  = "-" factor | power ;
//   power   = primary [ "^" factor ] ;            (right associative)
//   primary = number | variable | func "(" expr ")" | "(" expr ")" ;
//   func    = "sin" | "cos" | "exp" | "ln" | "sqrt" | "abs" ;
//
// Precedence: ^  >  unary minus  >  * /  >  + -.
// Variables: t (time, positive), x (space, may be negative), k (family
// index, positive integer).  Expressions are immutable after parsing and
// safe to evaluate concurrently.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

namespace oscwave {

enum class Var { T, X, K };

inline const char* var_name(Var v) {
    switch (v) {
        case Var::T: return "t";
        case Var::X: return "x";
        default: return "k";
    }
}

inline std::optional<Var> var_from_name(std::string_view s) {
    if (s == "t") return Var::T;
    if (s == "x") return Var::X;
    if (s == "k") return Var::K;
    return std::nullopt;
}

struct ParseError : std::runtime_error {
    std::size_t offset;
    ParseError(const std::string& msg, std::size_t off)
        : std::runtime_error(msg + " (at offset " + std::to_string(off) + ")"), offset(off) {}
};

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Values for the free variables of an expression.  Evaluating an
/// expression whose variable is unbound is an EvalError.
struct Bindings {
    std::optional<double> t, x, k;

    static Bindings at_t(double tv) { return Bindings{tv, std::nullopt, std::nullopt}; }
    static Bindings at_xt(double xv, double tv) { return Bindings{tv, xv, std::nullopt}; }
    static Bindings at_kt(double kv, double tv) { return Bindings{tv, std::nullopt, kv}; }

    std::optional<double> get(Var v) const {
        switch (v) {
            case Var::T: return t;
            case Var::X: return x;
            default: return k;
        }
    }
    Bindings with(Var v, double value) const {
        Bindings b = *this;
        switch (v) {
            case Var::T: b.t = value; break;
            case Var::X: b.x = value; break;
            default: b.k = value; break;
        }
        return b;
    }
};

enum class UnaryOp { Neg, Sin, Cos, Exp, Ln, Sqrt, Abs };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };

class Expr;
using ExprPtr = std::shared_ptr<const Expr>;

class Expr {
public:
    struct Constant { double value; };
    struct Variable { Var name; };
    struct Unary { UnaryOp op; ExprPtr child; };
    struct Binary { BinaryOp op; ExprPtr lhs, rhs; };
    using Node = std::variant<Constant, Variable, Unary, Binary>;

    explicit Expr(Node n) : node_(std::move(n)) {}
    const Node& node() const { return node_; }

    static ExprPtr constant(double v) { return std::make_shared<Expr>(Node{Constant{v}}); }
    static ExprPtr variable(Var v) { return std::make_shared<Expr>(Node{Variable{v}}); }
    static ExprPtr unary(UnaryOp op, ExprPtr c) {
        return std::make_shared<Expr>(Node{Unary{op, std::move(c)}});
    }
    static ExprPtr binary(BinaryOp op, ExprPtr l, ExprPtr r) {
        return std::make_shared<Expr>(Node{Binary{op, std::move(l), std::move(r)}});
    }

private:
    Node node_;
};

// ---------------------------------------------------------------------------
// evaluation

inline double eval(const Expr& e, const Bindings& b);

inline double eval(const ExprPtr& e, const Bindings& b) {
    if (!e) throw EvalError("null expression");
    return eval(*e, b);
}

namespace detail {

inline bool is_integral_value(double v) {
    return std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15;
}

inline double eval_pow(double base, double expo) {
    if (base < 0.0 && !is_integral_value(expo))
        throw EvalError("negative base with non-integer exponent");
    if (base == 0.0 && expo < 0.0) throw EvalError("zero base with negative exponent");
    return std::pow(base, expo);
}

}  // namespace detail

inline double eval(const Expr& e, const Bindings& b) {
    struct V {
        const Bindings& b;
        double operator()(const Expr::Constant& c) const { return c.value; }
        double operator()(const Expr::Variable& v) const {
            auto val = b.get(v.name);
            if (!val)
                throw EvalError(std::string("unbound variable '") + var_name(v.name) + "'");
            return *val;
        }
        double operator()(const Expr::Unary& u) const {
            double c = eval(*u.child, b);
            switch (u.op) {
                case UnaryOp::Neg: return -c;
                case UnaryOp::Sin: return std::sin(c);
                case UnaryOp::Cos: return std::cos(c);
                case UnaryOp::Exp: return std::exp(c);
                case UnaryOp::Ln:
                    if (c <= 0.0) throw EvalError("ln of non-positive value");
                    return std::log(c);
                case UnaryOp::Sqrt:
                    if (c < 0.0) throw EvalError("sqrt of negative value");
                    return std::sqrt(c);
                default: return std::abs(c);
            }
        }
        double operator()(const Expr::Binary& n) const {
            double l = eval(*n.lhs, b);
            double r = eval(*n.rhs, b);
            switch (n.op) {
                case BinaryOp::Add: return l + r;
                case BinaryOp::Sub: return l - r;
                case BinaryOp::Mul: return l * r;
                case BinaryOp::Div:
                    if (r == 0.0) throw EvalError("division by zero");
                    return l / r;
                default: return detail::eval_pow(l, r);
            }
        }
    };
    return std::visit(V{b}, e.node());
}

// ---------------------------------------------------------------------------
// structural helpers

inline bool structurally_equal(const ExprPtr& a, const ExprPtr& b) {
    if (a == b) return true;
    if (!a || !b) return false;
    const auto& na = a->node();
    const auto& nb = b->node();
    if (na.index() != nb.index()) return false;
    if (auto* ca = std::get_if<Expr::Constant>(&na))
        return ca->value == std::get<Expr::Constant>(nb).value;
    if (auto* va = std::get_if<Expr::Variable>(&na))
        return va->name == std::get<Expr::Variable>(nb).name;
    if (auto* ua = std::get_if<Expr::Unary>(&na)) {
        const auto& ub = std::get<Expr::Unary>(nb);
        return ua->op == ub.op && structurally_equal(ua->child, ub.child);
    }
    const auto& ba = std::get<Expr::Binary>(na);
    const auto& bb = std::get<Expr::Binary>(nb);
    return ba.op == bb.op && structurally_equal(ba.lhs, bb.lhs) &&
           structurally_equal(ba.rhs, bb.rhs);
}

inline bool depends_on(const ExprPtr& e, Var v) {
    if (!e) return false;
    const auto& n = e->node();
    if (auto* var = std::get_if<Expr::Variable>(&n)) return var->name == v;
    if (auto* u = std::get_if<Expr::Unary>(&n)) return depends_on(u->child, v);
    if (auto* bi = std::get_if<Expr::Binary>(&n))
        return depends_on(bi->lhs, v) || depends_on(bi->rhs, v);
    return false;
}

namespace detail {

/// Conservative: true when the subexpression can take a negative value.
/// t and k are positive by convention (time > t0 > 0, family index >= 1).
inline bool may_be_negative(const ExprPtr& e) {
    const auto& n = e->node();
    if (auto* c = std::get_if<Expr::Constant>(&n)) return c->value < 0.0;
    if (auto* v = std::get_if<Expr::Variable>(&n)) return v->name == Var::X;
    if (auto* u = std::get_if<Expr::Unary>(&n)) {
        switch (u->op) {
            case UnaryOp::Abs:
            case UnaryOp::Exp:
            case UnaryOp::Sqrt: return false;
            default: return true;
        }
    }
    const auto& bi = std::get<Expr::Binary>(n);
    switch (bi.op) {
        case BinaryOp::Add: return may_be_negative(bi.lhs) || may_be_negative(bi.rhs);
        case BinaryOp::Sub: return true;
        case BinaryOp::Mul:
        case BinaryOp::Div: return may_be_negative(bi.lhs) || may_be_negative(bi.rhs);
        case BinaryOp::Pow: {
            if (!may_be_negative(bi.lhs)) return false;
            if (auto* c = std::get_if<Expr::Constant>(&bi.rhs->node()))
                if (is_integral_value(c->value) && std::fmod(c->value, 2.0) == 0.0)
                    return false;
            return true;
        }
    }
    return true;
}

inline bool is_constant_expr(const ExprPtr& e) {
    const auto& n = e->node();
    if (std::holds_alternative<Expr::Constant>(n)) return true;
    if (std::holds_alternative<Expr::Variable>(n)) return false;
    if (auto* u = std::get_if<Expr::Unary>(&n)) return is_constant_expr(u->child);
    const auto& bi = std::get<Expr::Binary>(n);
    return is_constant_expr(bi.lhs) && is_constant_expr(bi.rhs);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// parsing

namespace detail {

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    ExprPtr parse() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("empty expression", 0);
        ExprPtr e = parse_expr();
        skip_ws();
        if (pos_ < src_.size())
            throw ParseError(std::string("unexpected character '") + src_[pos_] + "'", pos_);
        return e;
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) ++pos_;
    }
    bool peek_is(char c) {
        skip_ws();
        return pos_ < src_.size() && src_[pos_] == c;
    }
    bool consume(char c) {
        if (peek_is(c)) {
            ++pos_;
            return true;
        }
        return false;
    }

    ExprPtr parse_expr() {
        ExprPtr lhs = parse_term();
        for (;;) {
            if (consume('+'))
                lhs = Expr::binary(BinaryOp::Add, lhs, parse_term());
            else if (consume('-'))
                lhs = Expr::binary(BinaryOp::Sub, lhs, parse_term());
            else
                return lhs;
        }
    }

    ExprPtr parse_term() {
        ExprPtr lhs = parse_factor();
        for (;;) {
            if (consume('*'))
                lhs = Expr::binary(BinaryOp::Mul, lhs, parse_factor());
            else if (consume('/'))
                lhs = Expr::binary(BinaryOp::Div, lhs, parse_factor());
            else
                return lhs;
        }
    }

    ExprPtr parse_factor() {
        if (consume('-')) return Expr::unary(UnaryOp::Neg, parse_factor());
        return parse_power();
    }

    ExprPtr parse_power() {
        ExprPtr base = parse_primary();
        skip_ws();
        if (peek_is('^')) {
            std::size_t caret = pos_;
            ++pos_;
            ExprPtr expo = parse_factor();  // right associative, binds unary minus
            if (may_be_negative(base) && !is_constant_expr(expo))
                throw ParseError(
                    "exponent must be constant when the base may be negative", caret);
            return Expr::binary(BinaryOp::Pow, base, expo);
        }
        return base;
    }

    ExprPtr parse_primary() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("unexpected end of expression", pos_);
        char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            ExprPtr e = parse_expr();
            if (!consume(')')) throw ParseError("expected ')'", pos_);
            return e;
        }
        if ((c >= '0' && c <= '9') || c == '.') return parse_number();
        if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_')
            return parse_identifier();
        throw ParseError(std::string("unexpected character '") + c + "'", pos_);
    }

    ExprPtr parse_number() {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               ((src_[pos_] >= '0' && src_[pos_] <= '9') || src_[pos_] == '.'))
            ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t mark = pos_;
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') {
                while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') ++pos_;
            } else {
                pos_ = mark;  // 'e' belongs to something else; not an exponent
            }
        }
        double value = 0.0;
        auto res = std::from_chars(src_.data() + start, src_.data() + pos_, value);
        if (res.ec != std::errc() || res.ptr != src_.data() + pos_)
            throw ParseError("malformed number", start);
        return Expr::constant(value);
    }

    ExprPtr parse_identifier() {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               ((src_[pos_] >= 'a' && src_[pos_] <= 'z') ||
                (src_[pos_] >= 'A' && src_[pos_] <= 'Z') ||
                (src_[pos_] >= '0' && src_[pos_] <= '9') || src_[pos_] == '_'))
            ++pos_;
        std::string_view name = src_.substr(start, pos_ - start);
        if (auto v = var_from_name(name)) return Expr::variable(*v);

        UnaryOp op;
        if (name == "sin") op = UnaryOp::Sin;
        else if (name == "cos") op = UnaryOp::Cos;
        else if (name == "exp") op = UnaryOp::Exp;
        else if (name == "ln") op = UnaryOp::Ln;
        else if (name == "sqrt") op = UnaryOp::Sqrt;
        else if (name == "abs") op = UnaryOp::Abs;
        else
            throw ParseError("unknown identifier '" + std::string(name) + "'", start);

        if (!consume('('))
            throw ParseError("function '" + std::string(name) + "' requires '('", pos_);
        ExprPtr arg = parse_expr();
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == ',')
            throw ParseError("function '" + std::string(name) + "' takes one argument", pos_);
        if (!consume(')')) throw ParseError("expected ')'", pos_);
        return Expr::unary(op, arg);
    }
};

}  // namespace detail

inline ExprPtr parse_expression(std::string_view src) {
    return detail::Parser(src).parse();
}

// ---------------------------------------------------------------------------
// unparsing (minimal parentheses; reparse is structurally identical)

namespace detail {

inline int precedence_of(const Expr::Node& n) {
    if (std::holds_alternative<Expr::Constant>(n) ||
        std::holds_alternative<Expr::Variable>(n))
        return 5;
    if (auto* u = std::get_if<Expr::Unary>(&n))
        return u->op == UnaryOp::Neg ? 3 : 5;  // functions print their own parens
    switch (std::get<Expr::Binary>(n).op) {
        case BinaryOp::Add:
        case BinaryOp::Sub: return 1;
        case BinaryOp::Mul:
        case BinaryOp::Div: return 2;
        default: return 4;  // ^
    }
}

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void unparse_into(const ExprPtr& e, std::string& out);

inline void unparse_child(const ExprPtr& child, int parent_prec, bool parenthesize_equal,
                          std::string& out) {
    bool need = precedence_of(child->node()) < parent_prec ||
                (parenthesize_equal && precedence_of(child->node()) == parent_prec);
    if (need) out += '(';
    unparse_into(child, out);
    if (need) out += ')';
}

inline void unparse_into(const ExprPtr& e, std::string& out) {
    const auto& n = e->node();
    if (auto* c = std::get_if<Expr::Constant>(&n)) {
        out += format_double(c->value);
        return;
    }
    if (auto* v = std::get_if<Expr::Variable>(&n)) {
        out += var_name(v->name);
        return;
    }
    if (auto* u = std::get_if<Expr::Unary>(&n)) {
        if (u->op == UnaryOp::Neg) {
            out += '-';
            unparse_child(u->child, 3, false, out);
            return;
        }
        switch (u->op) {
            case UnaryOp::Sin: out += "sin("; break;
            case UnaryOp::Cos: out += "cos("; break;
            case UnaryOp::Exp: out += "exp("; break;
            case UnaryOp::Ln: out += "ln("; break;
            case UnaryOp::Sqrt: out += "sqrt("; break;
            default: out += "abs("; break;
        }
        unparse_into(u->child, out);
        out += ')';
        return;
    }
    const auto& bi = std::get<Expr::Binary>(n);
    int prec = precedence_of(n);
    switch (bi.op) {
        case BinaryOp::Add:
            unparse_child(bi.lhs, prec, false, out);
            out += '+';
            unparse_child(bi.rhs, prec, true, out);
            break;
        case BinaryOp::Sub:
            unparse_child(bi.lhs, prec, false, out);
            out += '-';
            unparse_child(bi.rhs, prec, true, out);
            break;
        case BinaryOp::Mul:
            unparse_child(bi.lhs, prec, false, out);
            out += '*';
            unparse_child(bi.rhs, prec, true, out);
            break;
        case BinaryOp::Div:
            unparse_child(bi.lhs, prec, false, out);
            out += '/';
            unparse_child(bi.rhs, prec, true, out);
            break;
        case BinaryOp::Pow:
            unparse_child(bi.lhs, prec, true, out);  // left operand of ^ parenthesized on tie
            out += '^';
            unparse_child(bi.rhs, prec, false, out);
            break;
    }
}

}  // namespace detail

inline std::string unparse(const ExprPtr& e) {
    std::string out;
    detail::unparse_into(e, out);
    return out;
}

// ---------------------------------------------------------------------------
// numeric differentiation

/// Central difference d/d(var) at `at`; remaining variables from `others`.
/// h <= 0 selects the default step max(1e-6, 1e-6*|at|).
inline double diff_numeric(const ExprPtr& e, Var var, double at, const Bindings& others = {},
                           double h = 0.0) {
    if (h <= 0.0) h = std::max(1e-6, 1e-6 * std::abs(at));
    double hi = eval(e, others.with(var, at + h));
    double lo = eval(e, others.with(var, at - h));
    return (hi - lo) / (2.0 * h);
}

/// Signed power for ratio-of-odd-integers exponents: sign(u)*|u|^a.
inline double spow(double u, double a) {
    if (u == 0.0) return 0.0;
    double m = std::pow(std::abs(u), a);
    return u < 0.0 ? -m : m;
}

}  // namespace oscwave
