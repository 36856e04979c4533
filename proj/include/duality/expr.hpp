#pragma once

// Utility expression DSL: parse, evaluate, differentiate and print U(q).
//
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := ('-')? base ('^' factor)?
//   base   := NUMBER | VAR | '(' expr ')' | FUNC '(' expr ')'
//   VAR    := 'q' [1-4]
//   FUNC   := 'ln' | 'exp' | 'sqrt'

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "duality/error.hpp"
#include "duality/vec.hpp"

namespace duality {

inline constexpr int kMaxGoods = 4;
inline constexpr double kEpsilonQ = 1e-9;

enum class Op { number, variable, add, sub, mul, div, pow, neg, ln, exp, sqrt };

struct Node;
using ExprPtr = std::shared_ptr<const Node>;

struct Node {
    Op op;
    double value = 0.0; // number
    int index = 0;      // variable, 0-based
    ExprPtr lhs;        // unary operand or left operand
    ExprPtr rhs;
};

namespace ex {

inline ExprPtr number(double v) { return std::make_shared<const Node>(Node{Op::number, v, 0, {}, {}}); }
inline ExprPtr variable(int i) { return std::make_shared<const Node>(Node{Op::variable, 0.0, i, {}, {}}); }
inline ExprPtr binary(Op op, ExprPtr a, ExprPtr b) {
    return std::make_shared<const Node>(Node{op, 0.0, 0, std::move(a), std::move(b)});
}
inline ExprPtr unary(Op op, ExprPtr a) {
    return std::make_shared<const Node>(Node{op, 0.0, 0, std::move(a), {}});
}

inline bool is_number(const ExprPtr& e, double v) { return e->op == Op::number && e->value == v; }
inline bool is_number(const ExprPtr& e) { return e->op == Op::number; }

// Folding constructors used by the differentiator. The parser builds raw
// trees so that printing round-trips structurally.
inline ExprPtr add(ExprPtr a, ExprPtr b) {
    if (is_number(a, 0.0)) return b;
    if (is_number(b, 0.0)) return a;
    if (is_number(a) && is_number(b)) return number(a->value + b->value);
    return binary(Op::add, std::move(a), std::move(b));
}
inline ExprPtr neg(ExprPtr a) {
    if (is_number(a)) return number(-a->value);
    if (a->op == Op::neg) return a->lhs;
    return unary(Op::neg, std::move(a));
}
inline ExprPtr sub(ExprPtr a, ExprPtr b) {
    if (is_number(b, 0.0)) return a;
    if (is_number(a, 0.0)) return neg(std::move(b));
    if (is_number(a) && is_number(b)) return number(a->value - b->value);
    return binary(Op::sub, std::move(a), std::move(b));
}
inline ExprPtr mul(ExprPtr a, ExprPtr b) {
    if (is_number(a, 0.0) || is_number(b, 0.0)) return number(0.0);
    if (is_number(a, 1.0)) return b;
    if (is_number(b, 1.0)) return a;
    if (is_number(a) && is_number(b)) return number(a->value * b->value);
    return binary(Op::mul, std::move(a), std::move(b));
}
inline ExprPtr div(ExprPtr a, ExprPtr b) {
    if (is_number(b, 1.0)) return a;
    if (is_number(a, 0.0)) return number(0.0);
    return binary(Op::div, std::move(a), std::move(b));
}
inline ExprPtr pow(ExprPtr a, ExprPtr b) {
    if (is_number(b, 1.0)) return a;
    if (is_number(b, 0.0)) return number(1.0);
    return binary(Op::pow, std::move(a), std::move(b));
}
inline ExprPtr call(Op fn, ExprPtr a) { return unary(fn, std::move(a)); }

} // namespace ex

inline bool structurally_equal(const ExprPtr& a, const ExprPtr& b) {
    if (a == b) return true;
    if (!a || !b) return false;
    if (a->op != b->op) return false;
    switch (a->op) {
    case Op::number: return a->value == b->value;
    case Op::variable: return a->index == b->index;
    default: return structurally_equal(a->lhs, b->lhs) && structurally_equal(a->rhs, b->rhs);
    }
}

inline bool depends_on_variables(const ExprPtr& e) {
    if (!e) return false;
    if (e->op == Op::variable) return true;
    return depends_on_variables(e->lhs) || depends_on_variables(e->rhs);
}

inline int highest_variable(const ExprPtr& e) {
    if (!e) return -1;
    if (e->op == Op::variable) return e->index;
    return std::max(highest_variable(e->lhs), highest_variable(e->rhs));
}

// ---------------------------------------------------------------------------
// Printing

namespace detail {

inline int precedence(const ExprPtr& e) {
    switch (e->op) {
    case Op::add:
    case Op::sub: return 1;
    case Op::mul:
    case Op::div: return 2;
    case Op::neg: return 3;
    case Op::pow: return 4;
    case Op::number: return e->value < 0 || std::signbit(e->value) ? 3 : 5;
    default: return 5;
    }
}

inline std::string format_number(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

inline void format_into(const ExprPtr& e, int min_prec, std::string& out);

inline void format_child(const ExprPtr& e, int min_prec, std::string& out) {
    if (precedence(e) < min_prec) {
        out += '(';
        format_into(e, 0, out);
        out += ')';
    } else {
        format_into(e, min_prec, out);
    }
}

inline void format_into(const ExprPtr& e, int, std::string& out) {
    switch (e->op) {
    case Op::number:
        if (std::signbit(e->value)) {
            out += '-';
            out += format_number(-e->value);
        } else {
            out += format_number(e->value);
        }
        return;
    case Op::variable:
        out += 'q';
        out += std::to_string(e->index + 1);
        return;
    case Op::add:
    case Op::sub:
        format_child(e->lhs, 1, out);
        out += e->op == Op::add ? '+' : '-';
        format_child(e->rhs, 2, out);
        return;
    case Op::mul:
    case Op::div:
        format_child(e->lhs, 2, out);
        out += e->op == Op::mul ? '*' : '/';
        format_child(e->rhs, 3, out);
        return;
    case Op::neg:
        out += '-';
        format_child(e->lhs, 4, out);
        return;
    case Op::pow:
        format_child(e->lhs, 5, out);
        out += '^';
        format_child(e->rhs, 3, out);
        return;
    case Op::ln:
    case Op::exp:
    case Op::sqrt:
        out += e->op == Op::ln ? "ln(" : e->op == Op::exp ? "exp(" : "sqrt(";
        format_into(e->lhs, 0, out);
        out += ')';
        return;
    }
}

} // namespace detail

inline std::string format_expr(const ExprPtr& e) {
    std::string out;
    detail::format_into(e, 0, out);
    return out;
}

// ---------------------------------------------------------------------------
// Differentiation

inline ExprPtr derivative(const ExprPtr& e, int i) {
    using namespace ex;
    switch (e->op) {
    case Op::number: return number(0.0);
    case Op::variable: return number(e->index == i ? 1.0 : 0.0);
    case Op::add: return add(derivative(e->lhs, i), derivative(e->rhs, i));
    case Op::sub: return sub(derivative(e->lhs, i), derivative(e->rhs, i));
    case Op::mul:
        return add(mul(derivative(e->lhs, i), e->rhs), mul(e->lhs, derivative(e->rhs, i)));
    case Op::div: {
        auto da = derivative(e->lhs, i);
        auto db = derivative(e->rhs, i);
        if (is_number(db, 0.0)) return div(da, e->rhs);
        return div(sub(mul(da, e->rhs), mul(e->lhs, db)), mul(e->rhs, e->rhs));
    }
    case Op::neg: return neg(derivative(e->lhs, i));
    case Op::ln: return div(derivative(e->lhs, i), e->lhs);
    case Op::exp: return mul(e, derivative(e->lhs, i));
    case Op::sqrt: return div(derivative(e->lhs, i), mul(number(2.0), e));
    case Op::pow: {
        const auto& base = e->lhs;
        const auto& expo = e->rhs;
        auto da = derivative(base, i);
        auto db = derivative(expo, i);
        if (!depends_on_variables(expo)) {
            if (is_number(da, 0.0)) return number(0.0);
            auto reduced = is_number(expo) ? number(expo->value - 1.0) : sub(expo, number(1.0));
            return mul(mul(expo, pow(base, reduced)), da);
        }
        if (!depends_on_variables(base)) return mul(mul(e, call(Op::ln, base)), db);
        return mul(e, add(mul(db, call(Op::ln, base)), div(mul(expo, da), base)));
    }
    }
    return number(0.0);
}

// ---------------------------------------------------------------------------
// Compiled evaluation

/// Postfix program for fast repeated evaluation. Domain violations yield NaN
/// from `run`; callers that need an exception use `checked`.
class Program {
public:
    Program() = default;
    explicit Program(const ExprPtr& e) {
        emit(e);
        int depth = 0;
        for (const auto& ins : code_) {
            depth += stack_effect(ins.op);
            max_depth_ = std::max(max_depth_, depth);
        }
    }

    double run(std::span<const double> q) const {
        constexpr int kInline = 32;
        std::array<double, kInline> small{};
        std::vector<double> big;
        double* st = small.data();
        if (max_depth_ > kInline) {
            big.resize(static_cast<std::size_t>(max_depth_));
            st = big.data();
        }
        int sp = 0;
        constexpr double nan = std::numeric_limits<double>::quiet_NaN();
        for (const auto& ins : code_) {
            switch (ins.op) {
            case Op::number: st[sp++] = ins.value; break;
            case Op::variable: st[sp++] = q[static_cast<std::size_t>(ins.index)]; break;
            case Op::add: --sp; st[sp - 1] += st[sp]; break;
            case Op::sub: --sp; st[sp - 1] -= st[sp]; break;
            case Op::mul: --sp; st[sp - 1] *= st[sp]; break;
            case Op::div:
                --sp;
                if (st[sp] == 0.0) return nan;
                st[sp - 1] /= st[sp];
                break;
            case Op::pow: {
                --sp;
                double b = st[sp - 1], x = st[sp];
                if (b < 0.0 && x != std::floor(x)) return nan;
                if (b == 0.0 && x < 0.0) return nan;
                st[sp - 1] = std::pow(b, x);
                break;
            }
            case Op::neg: st[sp - 1] = -st[sp - 1]; break;
            case Op::ln:
                if (!(st[sp - 1] > 0.0)) return nan;
                st[sp - 1] = std::log(st[sp - 1]);
                break;
            case Op::exp: st[sp - 1] = std::exp(st[sp - 1]); break;
            case Op::sqrt:
                if (st[sp - 1] < 0.0) return nan;
                st[sp - 1] = std::sqrt(st[sp - 1]);
                break;
            }
        }
        double r = st[0];
        return std::isfinite(r) ? r : nan;
    }

private:
    struct Instr {
        Op op;
        double value;
        int index;
    };

    static int stack_effect(Op op) {
        switch (op) {
        case Op::number:
        case Op::variable: return 1;
        case Op::add:
        case Op::sub:
        case Op::mul:
        case Op::div:
        case Op::pow: return -1;
        default: return 0;
        }
    }

    void emit(const ExprPtr& e) {
        if (e->lhs) emit(e->lhs);
        if (e->rhs) emit(e->rhs);
        code_.push_back({e->op, e->value, e->index});
    }

    std::vector<Instr> code_;
    int max_depth_ = 0;
};

// ---------------------------------------------------------------------------
// Utility expressions

/// A parsed direct utility function U(q) over 2..4 goods together with its
/// compiled value, gradient and Hessian programs. Immutable.
class UtilityExpr {
public:
    UtilityExpr() = default;

    static UtilityExpr from_tree(ExprPtr root) {
        int hi = highest_variable(root);
        if (hi < 0) throw DomainError("utility has no goods; need q1..qn with n >= 2");
        int n = hi + 1;
        if (n < 2) throw DomainError("utility must involve at least two goods (found only q1)");
        if (n > kMaxGoods) throw DomainError("at most 4 goods are supported");
        UtilityExpr u;
        u.root_ = std::move(root);
        u.n_goods_ = n;
        auto c = std::make_shared<Compiled>();
        c->value = Program(u.root_);
        std::vector<ExprPtr> first(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            first[static_cast<std::size_t>(i)] = derivative(u.root_, i);
            c->gradient.emplace_back(first[static_cast<std::size_t>(i)]);
        }
        c->hessian.resize(static_cast<std::size_t>(n * n));
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                Program p(derivative(first[static_cast<std::size_t>(i)], j));
                c->hessian[static_cast<std::size_t>(i * n + j)] = p;
                c->hessian[static_cast<std::size_t>(j * n + i)] = p;
            }
        c->partials = std::move(first);
        u.compiled_ = std::move(c);
        return u;
    }

    const ExprPtr& root() const { return root_; }
    int n_goods() const { return n_goods_; }
    const ExprPtr& partial(int i) const { return compiled_->partials[static_cast<std::size_t>(i)]; }

    /// NaN outside the domain.
    double value_or_nan(std::span<const double> q) const { return compiled_->value.run(q); }

    /// Gradient without the interior guard; NaN entries outside the domain.
    Vec gradient_or_nan(std::span<const double> q) const {
        Vec g(static_cast<std::size_t>(n_goods_));
        for (int i = 0; i < n_goods_; ++i)
            g[static_cast<std::size_t>(i)] = compiled_->gradient[static_cast<std::size_t>(i)].run(q);
        return g;
    }

    /// Row-major n x n Hessian; NaN entries outside the domain.
    Vec hessian_or_nan(std::span<const double> q) const {
        Vec h(static_cast<std::size_t>(n_goods_ * n_goods_));
        for (std::size_t k = 0; k < h.size(); ++k) h[k] = compiled_->hessian[k].run(q);
        return h;
    }

private:
    struct Compiled {
        Program value;
        std::vector<Program> gradient;
        std::vector<Program> hessian;
        std::vector<ExprPtr> partials;
    };

    ExprPtr root_;
    int n_goods_ = 0;
    std::shared_ptr<const Compiled> compiled_;
};

namespace detail {

class Parser {
public:
    explicit Parser(std::string_view text) : s_(text) {}

    ExprPtr parse() {
        skip();
        if (pos_ >= s_.size()) throw ParseError(pos_, "empty expression");
        auto e = expr();
        skip();
        if (pos_ < s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(pos_, msg); }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    char peek() {
        skip();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }

    ExprPtr expr() {
        auto lhs = term();
        for (char c = peek(); c == '+' || c == '-'; c = peek()) {
            ++pos_;
            lhs = ex::binary(c == '+' ? Op::add : Op::sub, lhs, term());
        }
        return lhs;
    }

    ExprPtr term() {
        auto lhs = factor();
        for (char c = peek(); c == '*' || c == '/'; c = peek()) {
            if (c == '*' && pos_ + 1 < s_.size() && s_[pos_ + 1] == '*')
                fail("'**' is not an operator (use '^')");
            ++pos_;
            lhs = ex::binary(c == '*' ? Op::mul : Op::div, lhs, factor());
        }
        return lhs;
    }

    ExprPtr factor() {
        bool negate = false;
        if (peek() == '-') {
            ++pos_;
            negate = true;
        }
        auto b = base();
        if (peek() == '^') {
            ++pos_;
            b = ex::binary(Op::pow, b, factor());
        }
        return negate ? ex::unary(Op::neg, b) : b;
    }

    ExprPtr base() {
        char c = peek();
        if (c == '\0') fail("unexpected end of input");
        if (c == '(') {
            ++pos_;
            auto e = expr();
            if (peek() != ')') fail("expected ')'");
            ++pos_;
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            std::string_view word = s_.substr(start, pos_ - start);
            if (word.size() >= 2 && word[0] == 'q' &&
                word.find_first_not_of("0123456789", 1) == std::string_view::npos) {
                int idx = 0;
                std::from_chars(word.data() + 1, word.data() + word.size(), idx);
                if (idx < 1 || idx > kMaxGoods)
                    throw DomainError("variable " + std::string(word) + " out of range q1..q4");
                return ex::variable(idx - 1);
            }
            Op fn;
            if (word == "ln") fn = Op::ln;
            else if (word == "exp") fn = Op::exp;
            else if (word == "sqrt") fn = Op::sqrt;
            else {
                pos_ = start;
                fail("unknown identifier '" + std::string(word) + "'");
            }
            if (peek() != '(') fail("expected '(' after " + std::string(word));
            ++pos_;
            auto arg = expr();
            if (peek() != ')') fail("expected ')'");
            ++pos_;
            return ex::call(fn, arg);
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    ExprPtr number() {
        std::size_t start = pos_;
        auto digits = [&] {
            std::size_t d = 0;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_, ++d;
            return d;
        };
        std::size_t nd = digits();
        if (pos_ < s_.size() && s_[pos_] == '.') {
            ++pos_;
            nd += digits();
        }
        if (nd == 0) {
            pos_ = start;
            fail("malformed number");
        }
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t save = pos_;
            ++pos_;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
            if (digits() == 0) pos_ = save;
        }
        double v = 0.0;
        auto res = std::from_chars(s_.data() + start, s_.data() + pos_, v);
        if (res.ec != std::errc{}) {
            pos_ = start;
            fail("malformed number");
        }
        return ex::number(v);
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline UtilityExpr parse_utility(std::string_view text) {
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos)
        throw ParseError(0, "empty expression");
    return UtilityExpr::from_tree(detail::Parser(text).parse());
}

inline std::string format_expr(const UtilityExpr& u) { return format_expr(u.root()); }

inline void check_bundle(const UtilityExpr& u, std::span<const double> q) {
    if (static_cast<int>(q.size()) != u.n_goods())
        throw DomainError("bundle has " + std::to_string(q.size()) + " entries, utility needs " +
                          std::to_string(u.n_goods()));
    if (!all_finite(q)) throw DomainError("bundle has non-finite entries");
}

inline double eval_utility(const UtilityExpr& u, std::span<const double> q) {
    check_bundle(u, q);
    double v = u.value_or_nan(q);
    if (std::isnan(v)) throw DomainError("utility undefined at this bundle");
    return v;
}

/// Symbolic gradient; the point is first clamped to q_i >= 1e-9.
inline Vec gradient(const UtilityExpr& u, std::span<const double> q) {
    check_bundle(u, q);
    Vec x(q.begin(), q.end());
    for (double& v : x) v = std::max(v, kEpsilonQ);
    Vec g = u.gradient_or_nan(x);
    if (!all_finite(g)) throw DomainError("gradient undefined at this bundle");
    return g;
}

inline Vec hessian(const UtilityExpr& u, std::span<const double> q) {
    check_bundle(u, q);
    Vec x(q.begin(), q.end());
    for (double& v : x) v = std::max(v, kEpsilonQ);
    Vec h = u.hessian_or_nan(x);
    if (!all_finite(h)) throw DomainError("Hessian undefined at this bundle");
    return h;
}

} // namespace duality
