#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "duality/families.hpp"

using namespace duality;

namespace {

Point pm(Vec P, double M) {
    Point p;
    p.P = std::move(P);
    p.M = M;
    return p;
}

Point pu(Vec P, double u) {
    Point p;
    p.P = std::move(P);
    p.u = u;
    return p;
}

Point qu(Vec q, double u) {
    Point p;
    p.q = std::move(q);
    p.u = u;
    return p;
}

} // namespace

TEST(Families, Construction) {
    auto cd = make_family("cobb_douglas", {{"a1", 0.3}});
    EXPECT_EQ(cd.utility_text, "q1^0.3*q2^0.7");
    EXPECT_EQ(cd.utility.n_goods(), 2);
    auto ql = make_family("quasilinear");
    EXPECT_EQ(ql.utility_text, "q1+ln(q2)");
    auto nc = make_family("nonconvex_demo");
    EXPECT_EQ(nc.utility_text, "q1^2+q2^2");
    EXPECT_FALSE(nc.has_oracle(NodeId::MDF));
    EXPECT_THROW(oracle_eval(nc, NodeId::MDF, pm({1, 1}, 2)), NoOracleError);
    auto c = make_family("ces", {{"a1", 0.4}, {"rho", -1}});
    EXPECT_EQ(c.utility_text, "(0.4*q1^-1+0.6*q2^-1)^-1");
    EXPECT_EQ(make_family("cobb_douglas", {{"a1", 0.2}, {"a2", 0.3}}).utility.n_goods(), 3);
}

TEST(Families, InvalidParams) {
    EXPECT_THROW(make_family("leontief"), ParamError);
    EXPECT_THROW(make_family("ces", {{"rho", 0}}), ParamError);
    EXPECT_THROW(make_family("ces", {{"rho", 1}}), ParamError);
    EXPECT_THROW(make_family("ces", {{"rho", -5}}), ParamError);
    EXPECT_THROW(make_family("cobb_douglas", {{"a1", 1.2}}), ParamError);
    EXPECT_THROW(make_family("cobb_douglas", {{"b", 0.2}}), ParamError);
    EXPECT_THROW(make_family("quasilinear", {{"a1", 0.2}}), ParamError);
}

TEST(Families, SpecParsing) {
    auto f = parse_family_spec("cobb_douglas:a1=0.3");
    EXPECT_DOUBLE_EQ(f.params.at("a2"), 0.7);
    auto c = parse_family_spec("ces:a1=0.5,rho=0.5");
    EXPECT_DOUBLE_EQ(c.params.at("rho"), 0.5);
    EXPECT_EQ(parse_family_spec("quasilinear").name, "quasilinear");
    EXPECT_THROW(parse_family_spec("ces:rho"), ParamError);
    EXPECT_THROW(parse_family_spec("ces:rho=abc"), ParamError);
}

TEST(Families, OracleExamples) {
    auto cd = make_family("cobb_douglas", {{"a1", 0.5}});
    EXPECT_NEAR(oracle_eval(cd, NodeId::EF, pu({1, 4}, 2))[0], 8.0, 1e-12);
    EXPECT_NEAR(oracle_eval(cd, NodeId::DF, qu({2, 2}, 1))[0], 2.0, 1e-12);
    auto x = oracle_eval(cd, NodeId::MDF, pm({1, 4}, 8));
    EXPECT_NEAR(x[0], 4.0, 1e-12);
    EXPECT_NEAR(x[1], 1.0, 1e-12);
    auto ql = make_family("quasilinear");
    EXPECT_NEAR(oracle_eval(ql, NodeId::MDF, pm({1, 1}, 5))[1], 1.0, 1e-12);
    EXPECT_NEAR(oracle_eval(ql, NodeId::MDF, pm({2, 1}, 10))[1], 2.0, 1e-12);
}

// Closed forms are trusted only after they agree with the brute-force lattice.
TEST(Families, DemandOraclesMatchGridOracle) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> lp(std::log(0.2), std::log(5.0));
    for (auto f : {make_family("cobb_douglas", {{"a1", 0.3}}), make_family("ces", {{"a1", 0.4}, {"rho", -1}}),
                   make_family("ces", {{"a1", 0.6}, {"rho", 0.5}}), make_family("quasilinear")}) {
        for (int k = 0; k < 5; ++k) {
            Vec P{std::exp(lp(rng)), std::exp(lp(rng))};
            double M = 10.0;
            auto grid = grid_oracle_budget(f.utility, {P, M}, 10001);
            auto x = oracle_eval(f, NodeId::MDF, pm(P, M));
            double spacing = M / P[0] / 10000 + M / P[1] / 10000;
            EXPECT_NEAR(x[0], grid.argmin_or_argmax[0], 2 * spacing) << f.name;
            EXPECT_NEAR(x[1], grid.argmin_or_argmax[1], 2 * spacing) << f.name;
            EXPECT_NEAR(oracle_eval(f, NodeId::IUF, pm(P, M))[0], grid.objective_value, 1e-6 * std::max(1.0, std::abs(grid.objective_value))) << f.name;
        }
    }
}

// Expenditure oracle against a scan of the indifference curve.
TEST(Families, ExpenditureOraclesMatchCurveScan) {
    for (auto f : {make_family("cobb_douglas", {{"a1", 0.5}}), make_family("ces", {{"a1", 0.4}, {"rho", -1}}),
                   make_family("quasilinear")}) {
        Vec P{1.3, 0.6};
        double u = 2.0;
        double best = INFINITY;
        for (int k = 1; k <= 20000; ++k) {
            double q1 = 10.0 * k / 20000;
            double lo = 0, hi = 1;
            while (hi < 1e6 && !(f.utility.value_or_nan(Vec{q1, hi}) >= u)) hi *= 2;
            if (hi >= 1e6) continue;
            for (int it = 0; it < 100; ++it) {
                double mid = 0.5 * (lo + hi);
                double v = f.utility.value_or_nan(Vec{q1, mid});
                (std::isnan(v) || v < u ? lo : hi) = mid;
            }
            best = std::min(best, P[0] * q1 + P[1] * hi);
        }
        EXPECT_NEAR(oracle_eval(f, NodeId::EF, pu(P, u))[0], best, 1e-5) << f.name;
    }
}

// Roy and Shephard on the oracles themselves, by finite differences.
TEST(Families, CobbDouglasOraclesSatisfyRoyAndShephard) {
    auto f = make_family("cobb_douglas", {{"a1", 0.3}});
    Vec P{1.5, 0.8};
    double M = 7.0, u = 2.0, h = 1e-6;
    auto x = f.mdf(P, M);
    double vm = (f.iuf(P, M + h) - f.iuf(P, M - h)) / (2 * h);
    auto hc = f.hdf(P, u);
    for (int i = 0; i < 2; ++i) {
        Vec Pp = P, Pm = P;
        Pp[i] += h;
        Pm[i] -= h;
        EXPECT_NEAR(-(f.iuf(Pp, M) - f.iuf(Pm, M)) / (2 * h) / vm, x[i], 1e-6);
        EXPECT_NEAR((f.ef(Pp, u) - f.ef(Pm, u)) / (2 * h), hc[i], 1e-6);
    }
}

TEST(Families, InverseDemandOracles) {
    auto f = make_family("cobb_douglas", {{"a1", 0.3}});
    Point at;
    at.q = Vec{3, 7};
    auto p = oracle_eval(f, NodeId::HIDF, at);
    EXPECT_NEAR(p[0], 0.1, 1e-12);
    EXPECT_NEAR(p[1], 0.1, 1e-12);
    auto g = make_family("cobb_douglas", {{"a1", 0.5}});
    auto psi = oracle_eval(g, NodeId::AIDF, qu({1, 1}, 1));
    EXPECT_NEAR(psi[0], 0.5, 1e-12);
    EXPECT_NEAR(psi[1], 0.5, 1e-12);
}

TEST(Families, QuasilinearCornerRegime) {
    auto f = make_family("quasilinear");
    auto x = oracle_eval(f, NodeId::MDF, pm({1, 1}, 0.5));
    EXPECT_EQ(x[0], 0.0);
    EXPECT_NEAR(x[1], 0.5, 1e-15);
    auto grid = grid_oracle_budget(f.utility, {{1, 1}, 0.5}, 10001);
    EXPECT_NEAR(grid.argmin_or_argmax[1], 0.5, 1e-4);
}
