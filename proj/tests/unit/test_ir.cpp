#include <doctest.h>

#include <cmath>

#include "tpl/activation.hpp"
#include "tpl/finite.hpp"
#include "tpl/harness.hpp"
#include "tpl/ir.hpp"

using namespace tpl;

TEST_CASE("activations and their derivatives")
{
    for (const auto& name : Activation::names()) {
        const Activation a = Activation::named(name);
        for (double x : {-1.3, -0.2, 0.4, 2.1}) {
            const double h = 1e-5;
            CHECK(a.df(x) == doctest::Approx((a.f(x + h) - a.f(x - h)) / (2 * h)).epsilon(1e-6));
            CHECK(a.d2f(x) == doctest::Approx((a.df(x + h) - a.df(x - h)) / (2 * h)).epsilon(1e-5));
        }
    }
    const Activation s = Activation::named("srelu");
    CHECK(s.f(0.7) == doctest::Approx(std::log1p(std::exp(2.8)) / 4));
    CHECK_THROWS_AS(Activation::named("swish"), Error);
}

TEST_CASE("builder validation")
{
    CHECK_THROWS_AS(ProgramBuilder().vector("x").matmul("W", "x", "y").build(), Error);
    CHECK_THROWS_AS(ProgramBuilder().vector("x").vector("x").build(), Error);
    CHECK_THROWS_AS(ProgramBuilder().vector("x").avg("x", "c").matrix("W").matmul("W", "c", "y").build(), Error);

    ProgramIR p;
    p.vectors = {"x"};
    p.instructions.push_back(OuterNonlin{{{"x", "x"}}, {}, fns::act("tanh"), "y"});
    const auto d = validate(p);
    REQUIRE_FALSE(d.empty());
    CHECK(d[0].code == "ArityMismatch");
    CHECK(d[0].index == 0);
}

TEST_CASE("program json round trip")
{
    const ProgramIR p = build_mlp_program(3, 2, "tanh", {0.5, -0.25});
    const auto j = program_to_json(p);
    const ProgramIR q = program_from_json(j);
    CHECK(program_to_json(q) == j);
    CHECK_THROWS_AS(program_from_json(nlohmann::json{{"instructions", {{{"op", "jump"}}}}}), Error);
}

TEST_CASE("finite execution matches a direct computation")
{
    const std::vector<double> xi{0.3, -0.8};
    MlpProgramNames names;
    const ProgramIR p = build_mlp_program(2, 2, "tanh", xi, &names);
    const Assignment a = sample_init(p, 50, InitDistribution{}, 7);
    const ExecResult r = execute(p, a);

    const VectorXd h1 = a.vectors.at("w1_1") * xi[0] + a.vectors.at("w1_2") * xi[1];
    const VectorXd x1 = h1.array().tanh();
    const VectorXd x2 = (a.matrices.at("W2") * x1).array().tanh();
    const VectorXd y = a.vectors.at("v").cwiseProduct(x2);
    CHECK((r.vectors.at("y") - y).norm() < 1e-12);
}

TEST_CASE("second order outer product averages over the pool")
{
    const ProgramIR p = ProgramBuilder()
                            .vector("x")
                            .vector("z")
                            .outer(fns::product({1, 1}), {{"x"}, {"z"}}, {}, "y")
                            .output("y")
                            .build();
    const Assignment a = sample_init(p, 20, InitDistribution{}, 3);
    const ExecResult r = execute(p, a);
    const VectorXd expect = a.vectors.at("x") * a.vectors.at("z").mean();
    CHECK((r.vectors.at("y") - expect).norm() < 1e-12);
}

TEST_CASE("initial distributions have variance 1/n")
{
    const ProgramIR p = ProgramBuilder().vector("x").matrix("W").matmul("W", "x", "y").output("y").build();
    for (const char* d : {"gaussian", "rademacher", "uniform"}) {
        const Assignment a = sample_init(p, 300, InitDistribution::named(d), 11);
        const MatrixXd& W = a.matrices.at("W");
        CHECK(W.array().square().mean() * 300 == doctest::Approx(1.0).epsilon(0.02));
        CHECK(std::abs(W.mean()) < 0.01);
    }
    CHECK_THROWS_AS(InitDistribution::named("cauchy"), Error);
}

TEST_CASE("backprop program gradients match finite differences")
{
    for (int L : {1, 2, 3}) {
        for (const auto& e : backprop_check(L, 3, 16, "tanh", 5))
            CHECK_MESSAGE(e.rel_error < 1e-6, e.param);
    }
}

TEST_CASE("backprop of a gram program")
{
    // d/dx sum(W^T W x) = W^T W 1
    const ProgramIR p = ProgramBuilder()
                            .vector("x")
                            .matrix("W")
                            .matmul("W", "x", "g")
                            .matmul("W", "g", "u", true)
                            .output("u")
                            .build();
    const ProgramIR q = backprop_transform(p, "u");
    CHECK(validate(q).empty());
    const Assignment a = sample_init(p, 12, InitDistribution{}, 2);
    const ExecResult r = execute(q, a);
    const MatrixXd& W = a.matrices.at("W");
    const VectorXd expect = W.transpose() * W * VectorXd::Ones(12);
    CHECK((r.vectors.at(grad_name("u", "x")) - expect).norm() < 1e-12);
    CHECK_THROWS_AS(backprop_transform(p, "W"), Error);
    CHECK_THROWS_AS(backprop_transform(p, "nope"), Error);
}

TEST_CASE("total program replicates inputs")
{
    const ProgramIR p = build_mlp_program(2, 1, "tanh", {1.0});
    const TotalProgram t = total_program(p, {"y"}, {{{"xi_1", 0.5}}, {{"xi_1", -1.0}}});
    CHECK(validate(t.program).empty());
    CHECK(t.groups.at("y").size() == 2);
}
