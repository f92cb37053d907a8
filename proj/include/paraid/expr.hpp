#pragma once

// Arithmetic expressions in t, x, y. Grammar (see docs/expression_grammar.md):
//
//   expr    = term { ("+" | "-") term } ;
//   term    = unary { ("*" | "/") unary } ;
//   unary   = ("-" | "+") unary | power ;
//   power   = primary [ "^" unary ] ;          (right-associative)
//   primary = number | "pi" | var | func "(" expr ")" | "(" expr ")" ;
//
// so "-x^2" is -(x^2) and "2^3^2" is 2^(3^2).

#include "paraid/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

namespace paraid {

class Expr {
public:
    enum class Op {
        number, var_t, var_x, var_y, pi,
        neg, add, sub, mul, div, pow,
        sin, cos, exp, sqrt, abs, tanh,
    };

    Expr() : Expr(number(0.0)) {}

    static Expr number(double v) { return Expr(make(Op::number, v, nullptr, nullptr)); }
    static Expr constant_pi() { return Expr(make(Op::pi, 0.0, nullptr, nullptr)); }
    static Expr variable(char name) {
        switch (name) {
            case 't': return Expr(make(Op::var_t, 0.0, nullptr, nullptr));
            case 'x': return Expr(make(Op::var_x, 0.0, nullptr, nullptr));
            case 'y': return Expr(make(Op::var_y, 0.0, nullptr, nullptr));
            default: throw Error(std::string("unknown variable '") + name + "'");
        }
    }
    /// Unary node: `neg` or one of the functions.
    static Expr unary(Op op, const Expr& arg) { return Expr(make(op, 0.0, arg.root_, nullptr)); }
    static Expr binary(Op op, const Expr& lhs, const Expr& rhs) {
        return Expr(make(op, 0.0, lhs.root_, rhs.root_));
    }

    static Expr parse(std::string_view text);

    /// Evaluates at (t, x, y). `y` must be present iff the expression uses it.
    double eval(double t, double x, std::optional<double> y = std::nullopt) const {
        return eval_node(*root_, t, x, y);
    }

    bool uses_y() const { return uses(*root_, Op::var_y); }
    bool uses_t() const { return uses(*root_, Op::var_t); }

    /// Fully parenthesized text that parses back to an identical tree.
    std::string to_string() const {
        std::string out;
        print(*root_, out);
        return out;
    }

private:
    struct Node {
        Op op;
        double value;
        std::shared_ptr<const Node> lhs;
        std::shared_ptr<const Node> rhs;
    };
    using NodePtr = std::shared_ptr<const Node>;

    explicit Expr(NodePtr root) : root_(std::move(root)) {}

    static NodePtr make(Op op, double v, NodePtr a, NodePtr b) {
        return std::make_shared<const Node>(Node{op, v, std::move(a), std::move(b)});
    }

    static const char* function_name(Op op) {
        switch (op) {
            case Op::sin: return "sin";
            case Op::cos: return "cos";
            case Op::exp: return "exp";
            case Op::sqrt: return "sqrt";
            case Op::abs: return "abs";
            case Op::tanh: return "tanh";
            default: return nullptr;
        }
    }

    static double checked(double v, const char* what) {
        if (!std::isfinite(v)) throw EvalError(std::string("non-finite value in ") + what);
        return v;
    }

    static double eval_node(const Node& n, double t, double x, std::optional<double> y) {
        switch (n.op) {
            case Op::number: return n.value;
            case Op::pi: return std::numbers::pi;
            case Op::var_t: return t;
            case Op::var_x: return x;
            case Op::var_y:
                if (!y) throw EvalError("variable 'y' referenced in a one-dimensional problem");
                return *y;
            case Op::neg: return -eval_node(*n.lhs, t, x, y);
            case Op::add: return checked(eval_node(*n.lhs, t, x, y) + eval_node(*n.rhs, t, x, y), "'+'");
            case Op::sub: return checked(eval_node(*n.lhs, t, x, y) - eval_node(*n.rhs, t, x, y), "'-'");
            case Op::mul: return checked(eval_node(*n.lhs, t, x, y) * eval_node(*n.rhs, t, x, y), "'*'");
            case Op::div: {
                const double a = eval_node(*n.lhs, t, x, y);
                const double b = eval_node(*n.rhs, t, x, y);
                if (b == 0.0) throw EvalError("division by zero");
                return checked(a / b, "'/'");
            }
            case Op::pow: {
                const double a = eval_node(*n.lhs, t, x, y);
                const double b = eval_node(*n.rhs, t, x, y);
                if (a == 0.0 && b < 0.0) throw EvalError("zero raised to a negative power");
                return checked(std::pow(a, b), "'^'");
            }
            case Op::sin: return checked(std::sin(eval_node(*n.lhs, t, x, y)), "sin");
            case Op::cos: return checked(std::cos(eval_node(*n.lhs, t, x, y)), "cos");
            case Op::exp: return checked(std::exp(eval_node(*n.lhs, t, x, y)), "exp");
            case Op::sqrt: {
                const double a = eval_node(*n.lhs, t, x, y);
                if (a < 0.0) throw EvalError("sqrt of negative value");
                return std::sqrt(a);
            }
            case Op::abs: return std::abs(eval_node(*n.lhs, t, x, y));
            case Op::tanh: return std::tanh(eval_node(*n.lhs, t, x, y));
        }
        throw EvalError("corrupt expression node");
    }

    static bool uses(const Node& n, Op var) {
        if (n.op == var) return true;
        if (n.lhs && uses(*n.lhs, var)) return true;
        return n.rhs && uses(*n.rhs, var);
    }

    static void print(const Node& n, std::string& out) {
        switch (n.op) {
            case Op::number: {
                char buf[40];
                const double v = std::signbit(n.value) ? -n.value : n.value;
                std::snprintf(buf, sizeof buf, "%.17g", v);
                if (std::signbit(n.value)) {
                    out += "(-";
                    out += buf;
                    out += ")";
                } else {
                    out += buf;
                }
                return;
            }
            case Op::pi: out += "pi"; return;
            case Op::var_t: out += "t"; return;
            case Op::var_x: out += "x"; return;
            case Op::var_y: out += "y"; return;
            case Op::neg:
                out += "(-";
                print(*n.lhs, out);
                out += ")";
                return;
            case Op::add: case Op::sub: case Op::mul: case Op::div: case Op::pow: {
                static constexpr char symbols[] = {'+', '-', '*', '/', '^'};
                out += "(";
                print(*n.lhs, out);
                out += symbols[static_cast<int>(n.op) - static_cast<int>(Op::add)];
                print(*n.rhs, out);
                out += ")";
                return;
            }
            default:
                out += function_name(n.op);
                out += "(";
                print(*n.lhs, out);
                out += ")";
                return;
        }
    }

    friend class ExprParser;
    NodePtr root_;
};

/// Recursive-descent parser for the grammar at the top of this file.
class ExprParser {
public:
    explicit ExprParser(std::string_view text) : text_(text) {}

    Expr parse() {
        skip_space();
        if (pos_ == text_.size()) throw ParseError("empty expression", pos_);
        Expr e = expr();
        skip_space();
        if (pos_ != text_.size()) {
            if (text_[pos_] == ')') throw ParseError("unbalanced ')'", pos_);
            throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_);
        }
        return e;
    }

private:
    using Op = Expr::Op;

    void skip_space() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
                                       text_[pos_] == '\r'))
            ++pos_;
    }

    bool accept(char c) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expr expr() {
        Expr lhs = term();
        for (;;) {
            if (accept('+')) lhs = Expr::binary(Op::add, lhs, term());
            else if (accept('-')) lhs = Expr::binary(Op::sub, lhs, term());
            else return lhs;
        }
    }

    Expr term() {
        Expr lhs = unary();
        for (;;) {
            if (accept('*')) lhs = Expr::binary(Op::mul, lhs, unary());
            else if (accept('/')) lhs = Expr::binary(Op::div, lhs, unary());
            else return lhs;
        }
    }

    Expr unary() {
        if (accept('-')) return Expr::unary(Op::neg, unary());
        if (accept('+')) return unary();
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (accept('^')) return Expr::binary(Op::pow, base, unary());
        return base;
    }

    Expr primary() {
        skip_space();
        if (pos_ == text_.size()) throw ParseError("missing operand", pos_);
        const char c = text_[pos_];
        if (c == '(') {
            const std::size_t open = pos_++;
            skip_space();
            if (pos_ < text_.size() && text_[pos_] == ')') throw ParseError("empty parentheses", pos_);
            Expr inner = expr();
            if (!accept(')')) {
                skip_space();
                if (pos_ == text_.size()) throw ParseError("unbalanced '(' opened at " + std::to_string(open), pos_);
                throw ParseError(std::string("expected ')' but found '") + text_[pos_] + "'", pos_);
            }
            return inner;
        }
        if ((c >= '0' && c <= '9') || c == '.') return number();
        if (is_ident_start(c)) return identifier();
        throw ParseError(std::string("missing operand before '") + c + "'", pos_);
    }

    Expr number() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && ((text_[pos_] >= '0' && text_[pos_] <= '9') || text_[pos_] == '.')) ++pos_;
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
            if (p < text_.size() && text_[p] >= '0' && text_[p] <= '9') {
                pos_ = p;
                while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') ++pos_;
            }
        }
        double v = 0.0;
        const auto* first = text_.data() + start;
        const auto* last = text_.data() + pos_;
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last) throw ParseError("malformed number", start);
        return Expr::number(v);
    }

    static bool is_ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
    static bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

    Expr identifier() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
        const std::string_view name = text_.substr(start, pos_ - start);
        if (name == "t") return Expr::variable('t');
        if (name == "x") return Expr::variable('x');
        if (name == "y") return Expr::variable('y');
        if (name == "pi") return Expr::constant_pi();

        static constexpr std::pair<std::string_view, Op> functions[] = {
            {"sin", Op::sin}, {"cos", Op::cos}, {"exp", Op::exp},
            {"sqrt", Op::sqrt}, {"abs", Op::abs}, {"tanh", Op::tanh},
        };
        for (const auto& [fname, op] : functions) {
            if (name != fname) continue;
            if (!accept('(')) throw ParseError("expected '(' after function '" + std::string(name) + "'", pos_);
            skip_space();
            if (pos_ < text_.size() && text_[pos_] == ')') throw ParseError("missing function argument", pos_);
            Expr arg = expr();
            if (!accept(')')) {
                skip_space();
                throw ParseError("unbalanced '(' in call to " + std::string(name), pos_);
            }
            return Expr::unary(op, arg);
        }
        throw ParseError("unknown identifier '" + std::string(name) + "'", start);
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

inline Expr Expr::parse(std::string_view text) { return ExprParser(text).parse(); }

}  // namespace paraid
