#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "duality/expr.hpp"

using namespace duality;

namespace {

// Central differences evaluated straight from the value program; kept apart
// from the symbolic path it checks.
std::vector<double> fd_gradient(const UtilityExpr& u, std::vector<double> q, double h = 1e-6) {
    std::vector<double> g(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        auto qp = q, qm = q;
        qp[i] += h;
        qm[i] -= h;
        g[i] = (eval_utility(u, qp) - eval_utility(u, qm)) / (2 * h);
    }
    return g;
}

const char* kFamilies[] = {
    "q1^0.3*q2^0.7",
    "q1^0.5*q2^0.5",
    "(0.5*q1^-1+0.5*q2^-1)^-1",
    "(0.4*q1^0.5+0.6*q2^0.5)^2",
    "q1+ln(q2)",
    "q1^2+q2^2",
    "q1*q2",
};

} // namespace

TEST(Parse, CobbDouglasTree) {
    auto u = parse_utility("q1^0.5 * q2^0.5");
    EXPECT_EQ(u.n_goods(), 2);
    const auto& r = u.root();
    ASSERT_EQ(r->op, Op::mul);
    EXPECT_EQ(r->lhs->op, Op::pow);
    EXPECT_EQ(r->lhs->lhs->op, Op::variable);
    EXPECT_EQ(r->lhs->lhs->index, 0);
    EXPECT_EQ(r->lhs->rhs->value, 0.5);
    EXPECT_EQ(r->rhs->lhs->index, 1);
}

TEST(Parse, QuasiLinearTree) {
    auto u = parse_utility("q1 + ln(q2)");
    EXPECT_EQ(u.n_goods(), 2);
    ASSERT_EQ(u.root()->op, Op::add);
    EXPECT_EQ(u.root()->rhs->op, Op::ln);
}

TEST(Parse, DoubleStarRejectedAtOffset3) {
    try {
        parse_utility("q1 ** q2");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        ASSERT_TRUE(e.position().has_value());
        EXPECT_EQ(*e.position(), 3u);
    }
}

TEST(Parse, Errors) {
    EXPECT_THROW(parse_utility(""), ParseError);
    EXPECT_THROW(parse_utility("   "), ParseError);
    EXPECT_THROW(parse_utility("q1 +"), ParseError);
    EXPECT_THROW(parse_utility("(q1*q2"), ParseError);
    EXPECT_THROW(parse_utility("q1 * foo(q2)"), ParseError);
    EXPECT_THROW(parse_utility("q1 q2"), ParseError);
    EXPECT_THROW(parse_utility("--q1*q2"), ParseError);
    EXPECT_THROW(parse_utility("q5*q1"), DomainError);
    EXPECT_THROW(parse_utility("q0*q1"), DomainError);
    EXPECT_THROW(parse_utility("q1^2"), DomainError);
    EXPECT_THROW(parse_utility("2+3"), DomainError);
}

TEST(Parse, PowerIsRightAssociativeAndBindsTighterThanMinus) {
    auto u = parse_utility("q1^2^3 + q2");
    const auto& p = u.root()->lhs;
    ASSERT_EQ(p->op, Op::pow);
    EXPECT_EQ(p->rhs->op, Op::pow);
    auto v = parse_utility("-q1^2 + q2");
    EXPECT_EQ(v.root()->lhs->op, Op::neg);
    EXPECT_EQ(v.root()->lhs->lhs->op, Op::pow);
    EXPECT_DOUBLE_EQ(eval_utility(v, std::vector<double>{3, 1}), -8.0);
}

TEST(Parse, SparseIndicesInferHighest) {
    auto u = parse_utility("q1 + q3");
    EXPECT_EQ(u.n_goods(), 3);
}

TEST(Eval, Examples) {
    EXPECT_DOUBLE_EQ(eval_utility(parse_utility("q1*q2"), std::vector<double>{1, 1}), 1.0);
    EXPECT_DOUBLE_EQ(eval_utility(parse_utility("q1^0.5*q2^0.5"), std::vector<double>{4, 1}), 2.0);
    EXPECT_THROW(eval_utility(parse_utility("q1+ln(q2)"), std::vector<double>{1, 0}), DomainError);
}

TEST(Eval, DomainViolations) {
    std::vector<double> zero{0, 1};
    EXPECT_THROW(eval_utility(parse_utility("q2/q1"), zero), DomainError);
    EXPECT_THROW(eval_utility(parse_utility("q1^-1+q2"), zero), DomainError);
    EXPECT_THROW(eval_utility(parse_utility("sqrt(q1-q2)"), zero), DomainError);
    EXPECT_THROW(eval_utility(parse_utility("(q1-q2)^0.5"), zero), DomainError);
    EXPECT_DOUBLE_EQ(eval_utility(parse_utility("(q1-q2)^2"), zero), 1.0);
    EXPECT_THROW(eval_utility(parse_utility("q1*q2"), std::vector<double>{1, 1, 1}), DomainError);
}

TEST(Gradient, Examples) {
    auto g = gradient(parse_utility("q1*q2"), std::vector<double>{2, 3});
    EXPECT_DOUBLE_EQ(g[0], 3.0);
    EXPECT_DOUBLE_EQ(g[1], 2.0);
    g = gradient(parse_utility("q1+ln(q2)"), std::vector<double>{5, 2});
    EXPECT_DOUBLE_EQ(g[0], 1.0);
    EXPECT_DOUBLE_EQ(g[1], 0.5);
}

TEST(Gradient, CobbDouglasMatchesCentralDifferences) {
    auto u = parse_utility("q1^0.3*q2^0.7");
    std::vector<double> q{1, 1};
    auto fd = fd_gradient(u, q);
    auto g = gradient(u, q);
    EXPECT_NEAR(g[0], fd[0], 1e-8);
    EXPECT_NEAR(g[1], fd[1], 1e-8);
    EXPECT_NEAR(g[0], 0.3, 1e-12);
    EXPECT_NEAR(g[1], 0.7, 1e-12);
}

TEST(Gradient, AllFamiliesAgreeWithCentralDifferences) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(0.2, 5.0);
    for (const char* text : kFamilies) {
        auto u = parse_utility(text);
        for (int k = 0; k < 20; ++k) {
            std::vector<double> q{dist(rng), dist(rng)};
            auto fd = fd_gradient(u, q);
            auto g = gradient(u, q);
            for (std::size_t i = 0; i < q.size(); ++i)
                EXPECT_LE(std::abs(g[i] - fd[i]) / std::max(1.0, std::abs(fd[i])), 1e-5) << text;
        }
    }
}

TEST(Gradient, HessianMatchesDifferencedGradient) {
    for (const char* text : kFamilies) {
        auto u = parse_utility(text);
        std::vector<double> q{1.3, 0.7};
        auto H = hessian(u, q);
        for (std::size_t j = 0; j < 2; ++j) {
            auto qp = q, qm = q;
            qp[j] += 1e-6;
            qm[j] -= 1e-6;
            auto gp = gradient(u, qp), gm = gradient(u, qm);
            for (std::size_t i = 0; i < 2; ++i)
                EXPECT_NEAR(H[i * 2 + j], (gp[i] - gm[i]) / 2e-6, 1e-5 * std::max(1.0, std::abs(H[i * 2 + j]))) << text;
        }
    }
}

TEST(Gradient, InteriorGuardClampsBoundary) {
    auto u = parse_utility("q1^2+q2^2");
    auto g = gradient(u, std::vector<double>{0, 1});
    EXPECT_NEAR(g[0], 2e-9, 1e-20);
    EXPECT_THROW(gradient(parse_utility("sqrt(q1-q2)"), std::vector<double>{0, 1}), DomainError);
}

TEST(Format, Examples) {
    EXPECT_EQ(format_expr(parse_utility("q1*q2")), "q1*q2");
    EXPECT_EQ(format_expr(parse_utility("(q1)*q2")), "q1*q2");
    EXPECT_EQ(format_expr(parse_utility("q1^0.5*q2^0.5")), "q1^0.5*q2^0.5");
    EXPECT_EQ(format_expr(parse_utility("(0.5*q1^-1 + 0.5*q2^-1)^(-1)")), "(0.5*q1^-1+0.5*q2^-1)^-1");
}

TEST(Format, RoundTripIsStructural) {
    const char* inputs[] = {
        "q1*q2",       "q1 - (q2 - q1)", "q1/(q2*q1)", "(q1^q2)^2", "q1^q2^2",   "-(q1*q2)",
        "-q1^2*q2",    "q1*-q2",         "q1--q2",     "exp(q1/q2) + sqrt(q1)", "ln(q1)+ln(q2)",
        "(q1+q2)*(q1-q2)", "q1 + (q2 + q1)", "1e-7*q1+q2", "q1^(0.5-0.25)*q2",
    };
    for (const char* s : inputs) {
        auto u = parse_utility(s);
        auto again = parse_utility(format_expr(u));
        EXPECT_TRUE(structurally_equal(u.root(), again.root())) << s << " -> " << format_expr(u);
    }
    for (const char* s : kFamilies) {
        auto u = parse_utility(s);
        EXPECT_TRUE(structurally_equal(u.root(), parse_utility(format_expr(u)).root())) << s;
    }
}

// Random trees: print, re-parse, compare.
TEST(Format, RandomTreesRoundTrip) {
    std::mt19937 rng(11);
    std::function<ExprPtr(int)> gen = [&](int depth) -> ExprPtr {
        int pick = depth <= 0 ? static_cast<int>(rng() % 2) : static_cast<int>(rng() % 10);
        switch (pick) {
        case 0: return ex::number(static_cast<double>(rng() % 1000) / 8.0);
        case 1: return ex::variable(static_cast<int>(rng() % 2));
        case 2: return ex::binary(Op::add, gen(depth - 1), gen(depth - 1));
        case 3: return ex::binary(Op::sub, gen(depth - 1), gen(depth - 1));
        case 4: return ex::binary(Op::mul, gen(depth - 1), gen(depth - 1));
        case 5: return ex::binary(Op::div, gen(depth - 1), gen(depth - 1));
        case 6: return ex::binary(Op::pow, gen(depth - 1), gen(depth - 1));
        case 7: return ex::unary(Op::neg, gen(depth - 1));
        case 8: return ex::unary(Op::ln, gen(depth - 1));
        default: return ex::unary(Op::sqrt, gen(depth - 1));
        }
    };
    for (int k = 0; k < 500; ++k) {
        auto tree = ex::binary(Op::add, gen(4), ex::binary(Op::mul, ex::variable(0), ex::variable(1)));
        auto text = format_expr(tree);
        auto back = parse_utility(text);
        EXPECT_TRUE(structurally_equal(tree, back.root())) << text;
    }
}

TEST(Derivative, SymbolicRulesPerNodeKind) {
    // d/dq1 of exp(q1*q2) = q2*exp(q1*q2)
    auto u = parse_utility("exp(q1*q2) + sqrt(q1) + q1/q2 + q1^q2");
    std::vector<double> q{1.5, 0.8};
    auto g = gradient(u, q);
    double q1 = q[0], q2 = q[1];
    EXPECT_NEAR(g[0], q2 * std::exp(q1 * q2) + 0.5 / std::sqrt(q1) + 1 / q2 + q2 * std::pow(q1, q2 - 1), 1e-12);
    EXPECT_NEAR(g[1], q1 * std::exp(q1 * q2) - q1 / (q2 * q2) + std::pow(q1, q2) * std::log(q1), 1e-12);
}
