#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tpl/harness.hpp"

using namespace tpl;

TEST_CASE("slope of an exact power law")
{
    std::vector<std::pair<double, double>> pts;
    for (int k = 6; k <= 12; ++k)
        pts.emplace_back(std::ldexp(1.0, k), std::pow(std::ldexp(1.0, k), -0.5));
    const SlopeFit f = convergence_slope(pts);
    CHECK(std::abs(f.slope + 0.5) < 1e-12);
    CHECK(f.ci_low <= f.slope);
    CHECK(f.ci_high >= f.slope);
}

TEST_CASE("constant error gives slope zero")
{
    const SlopeFit f = convergence_slope({{64, 0.3}, {256, 0.3}, {1024, 0.3}});
    CHECK(std::abs(f.slope) < 1e-12);
}

TEST_CASE("slope needs three points over two octaves")
{
    CHECK_THROWS_AS(convergence_slope({{64, 1}, {128, 0.5}}), Error);
    CHECK_THROWS_AS(convergence_slope({{64, 1}, {100, 0.5}, {128, 0.4}}), Error);
    CHECK_THROWS_AS(convergence_slope({{64, 1}, {128, 0.0}, {512, 0.4}}), Error);
}

TEST_CASE("bootstrap slope from trials")
{
    std::vector<double> ns;
    std::vector<std::vector<double>> errs;
    Rng rng = make_rng(3, {});
    std::normal_distribution<double> nd;
    for (int k = 6; k <= 12; ++k) {
        const double n = std::ldexp(1.0, k);
        ns.push_back(n);
        std::vector<double> e;
        for (int t = 0; t < 32; ++t)
            e.push_back(std::abs(nd(rng)) / std::sqrt(n));
        errs.push_back(e);
    }
    const SlopeFit f = convergence_slope_trials(ns, errs, 300, 1);
    CHECK(f.slope > -0.75);
    CHECK(f.slope < -0.25);
    CHECK(f.ci_low < f.slope);
    CHECK(f.ci_high > f.slope);
}

TEST_CASE("sign test tail probabilities")
{
    CHECK(sign_test_p(10, 10) == doctest::Approx(1.0 / 1024));
    CHECK(sign_test_p(0, 10) == doctest::Approx(1.0));
    // P(X >= 8) for n = 10: (45 + 10 + 1) / 1024
    CHECK(sign_test_p(8, 10) == doctest::Approx(56.0 / 1024));
}

namespace {

SweepConfig tiny(SweepMode mode)
{
    SweepConfig c;
    c.mode = mode;
    c.widths = {16, 64};
    c.L = 2;
    c.d = 3;
    c.n_train = 5;
    c.n_test = 2;
    c.steps = 2;
    c.trials = 2;
    c.m = 500;
    c.seed = 4;
    return c;
}

} // namespace

TEST_CASE("sweep at T = 0 has zero gaps")
{
    SweepConfig c = tiny(SweepMode::nt);
    c.widths = {32};
    c.steps = 0;
    const SweepReport r = width_sweep(c);
    REQUIRE(r.widths.size() == 1);
    CHECK(r.widths[0].gap[0].isZero());
}

TEST_CASE("sweep report round trip and determinism")
{
    const SweepConfig c = tiny(SweepMode::mu);
    const SweepReport a = width_sweep(c);
    const SweepReport b = width_sweep(c);
    json ja = report_to_json(a), jb = report_to_json(b);
    ja.erase("metadata");
    jb.erase("metadata");
    CHECK(ja == jb);
    CHECK(a.cells == 2 * 7);
    for (const auto& w : a.widths)
        for (const auto& g : w.gap)
            CHECK(g.minCoeff() >= 0);

    const SweepReport back = report_from_json(report_to_json(a));
    CHECK(report_to_json(back) == report_to_json(a));

    const auto dir = std::filesystem::temp_directory_path() / "tpl_sweep_test";
    const auto paths = write_sweep_files(dir.string(), a);
    CHECK(paths.size() == 3);
    std::filesystem::remove_all(dir);
}

TEST_CASE("sweep config checks")
{
    SweepConfig c = tiny(SweepMode::nt);
    c.widths = {64, 16};
    CHECK_THROWS_AS(c.check(), Error);
    c = tiny(SweepMode::nt);
    c.preset = "muP";
    CHECK_THROWS_AS(c.check(), Error);
    c = tiny(SweepMode::mu);
    c.preset = "NTP";
    CHECK_THROWS_AS(c.check(), Error);
    CHECK(tiny(SweepMode::nt).samples() == 500);
    SweepConfig d;
    CHECK(d.samples() == 200000);
    d.mode = SweepMode::mu;
    CHECK(d.samples() == 20000);
}

TEST_CASE("sweep config json")
{
    SweepConfig c = tiny(SweepMode::nt);
    c.mods.lambda = 0.01;
    const SweepConfig d = sweep_config_from_json(sweep_config_to_json(c));
    CHECK(sweep_config_to_json(d) == sweep_config_to_json(c));
    CHECK_THROWS_AS(sweep_config_from_json(json{{"mode", "ntk"}}), Error);
    CHECK_THROWS_AS(sweep_config_from_json(json{{"widths", "64"}}), Error);
}

TEST_CASE("master theorem scalars at finite width")
{
    const auto v = finite_scalar_trials(gram_program(), "c", 512, 8, InitDistribution{}, 1);
    double mean = 0;
    for (double x : v)
        mean += x / v.size();
    CHECK(mean == doctest::Approx(1.0).epsilon(0.15));
    CHECK_THROWS_AS(finite_scalar_trials(gram_program(), "nope", 8, 1, InitDistribution{}, 1), Error);
}

TEST_CASE("kernel drift shrinks under NTP")
{
    const Dataset ds = make_dataset(4, 6, 0, 2);
    FiniteTrainConfig c;
    c.L = 2;
    c.xi = ds.xi;
    c.param = preset("NTP", 2);
    c.rule = UpdateRule::adam(0.9, 0.999, 1e-4);
    c.eps = ds.signal();
    c.eta = 0.2;
    c.trials = 3;
    const auto d = kernel_drift(c, {64, 1024}, 2);
    CHECK(d[1] < d[0]);
}
