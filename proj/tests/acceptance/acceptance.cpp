// Acceptance run: one PASS/FAIL line per criterion.
// Usage: tpl_acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "tpl/harness.hpp"
#include "tpl/limits.hpp"
#include "tpl/param.hpp"

using namespace tpl;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

double mean_of(const std::vector<double>& v)
{
    double s = 0;
    for (double x : v)
        s += x;
    return s / v.size();
}

double se_of(const std::vector<double>& v)
{
    const double m = mean_of(v);
    double s = 0;
    for (double x : v)
        s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1) / v.size());
}

double trace_rel_diff(const std::vector<VectorXd>& a, const std::vector<VectorXd>& b)
{
    double diff = 0, scale = 0;
    for (size_t t = 0; t < a.size(); ++t) {
        diff = std::max(diff, (a[t] - b[t]).cwiseAbs().maxCoeff());
        scale = std::max(scale, a[t].cwiseAbs().maxCoeff());
    }
    return diff / std::max(scale, 1e-300);
}

// ---- 1 ----
Outcome truth_table()
{
    bool ok = true;
    std::ostringstream why;
    for (int L : {1, 2, 3, 4}) {
        const auto sp = classify(preset("SP", L));
        const auto ntp = classify(preset("NTP", L));
        const auto mup = classify(preset("muP", L));
        const auto up = classify(preset("UP(1/4)", L));
        const bool l_ok = sp.stable_init && !sp.faithful_init && ntp.stable_init && ntp.faithful_init &&
                          ntp.stable_faithful_training && ntp.nontrivial &&
                          ntp.regime == Regime::operator_regime && ntp.r.r == Rational(1, 2) && mup.stable_init &&
                          mup.faithful_init && mup.stable_faithful_training && mup.nontrivial &&
                          mup.regime == Regime::feature_learning && mup.r.r == Rational(0) &&
                          up.regime == Regime::operator_regime && up.r.r == Rational(1, 4);
        if (!l_ok)
            why << " mismatch at L=" << L;
        ok &= l_ok;
    }
    return {ok, ok ? "SP/NTP/muP/UP(1/4) verdicts exact for L=1..4" : why.str()};
}

// ---- 2 ----
Outcome symmetry_invariance()
{
    const int L = 2;
    const Dataset ds = make_dataset(10, 20, 4, 21);
    Rng rng = make_rng(2024, {2});
    std::uniform_int_distribution<int> den(1, 6), layer(1, L + 1);
    double worst = 0;
    bool classify_ok = true;
    int runs = 0;
    for (const char* name : {"muP", "NTP"}) {
        FiniteTrainConfig c;
        c.L = L;
        c.width = 256;
        c.xi = ds.xi;
        c.param = preset(name, L);
        c.rule = UpdateRule::adam(0.9, 0.999, 1e-4);
        c.eps = ds.signal();
        c.eta = 0.2;
        c.steps = 5;
        c.trials = 1;
        c.seed = 77;
        c.subtract_f0 = false;
        const FiniteTrace base = train_finite_mlp(c);
        const std::string cls = classify(c.param).to_json().dump();
        for (int k = 0; k < 50; ++k) {
            const int q = den(rng);
            std::uniform_int_distribution<int> num(-q, q);
            int p = 0;
            while (p == 0)
                p = num(rng);
            FiniteTrainConfig s = c;
            s.param = symmetry_shift(c.param, layer(rng), Rational(p, q));
            classify_ok &= classify(s.param).to_json().dump() == cls;
            worst = std::max(worst, trace_rel_diff(base.f[0], train_finite_mlp(s).f[0]));
            ++runs;
        }
    }
    return {worst <= 1e-8 && classify_ok,
            fmt("%g shifted runs, max relative trace difference %.2e (tol 1e-8), classify identical: ", runs, worst) +
                (classify_ok ? "yes" : "no")};
}

// ---- 3 ----
Outcome ntk_reduction()
{
    const Dataset ds = make_dataset(10, 8, 0, 33);
    const NTKets k = nt_static_kets(3, Activation::named("srelu"), ds.xi, 200000, 0.0, 1, 33);
    Rng rng = make_rng(33, {3});
    VectorXd chi(8);
    fill_normal(chi.data(), 8, rng);
    const NTOperatorResult r = nt_operator(k, UpdateRule::sgd(), {chi});
    const VectorXd expect = nt_kernel(k) * chi;
    double worst = 0;
    for (Index i = 0; i < 8; ++i)
        worst = std::max(worst, std::abs(r.value(i) - expect(i)) / r.stderr_(i));
    return {worst <= 5, fmt("max |K(chi) - chi.K| = %.2f standard errors (tol 5), N=8, L=3, m=2e5", worst)};
}

// ---- 4, 5 ----
Outcome sweep(SweepMode mode)
{
    SweepConfig c;
    c.mode = mode;
    c.L = mode == SweepMode::nt ? 4 : 2;
    c.seed = mode == SweepMode::nt ? 4 : 5;
    c.threads = default_threads();
    const SweepReport r = width_sweep(c);
    std::string failed;
    for (const auto& w : r.widths)
        if (!w.ok)
            failed += " width " + std::to_string(w.width) + " failed (" + w.error + ")";
    const bool ok = failed.empty() && r.cells > 0 && r.frac_decreasing >= 0.9 && r.sign_test_p < 0.01;
    return {ok, fmt("gap(4096) < gap(64) in %.0f/%.0f cells (%.1f%%, need 90%%), sign test p=%.2e", r.decreasing,
                    r.cells, 100 * r.frac_decreasing, r.sign_test_p) +
                    fmt(", strictly monotone %.1f%%, gap slope %.2f", 100 * r.frac_monotone, r.gap_slope) + failed};
}

// ---- 6, 7 ----
struct ScalarCase {
    std::string name;
    ProgramIR program;
    double limit;
};

std::vector<ScalarCase> scalar_cases()
{
    const std::vector<double> xi{0.6, -0.48, 0.64};
    return {{"gram", gram_program(), 1.0}, {"nngp", nngp_program(2, "srelu", xi), nngp_limit(2, "srelu", xi)}};
}

Outcome master_rate()
{
    bool ok = true;
    std::string detail;
    for (const auto& sc : scalar_cases()) {
        std::vector<double> ns;
        std::vector<std::vector<double>> errs;
        for (int k = 6; k <= 12; ++k) {
            const Index n = Index(1) << k;
            const auto v = finite_scalar_trials(sc.program, "c", n, 32, InitDistribution{}, 600 + k);
            std::vector<double> e;
            for (double x : v)
                e.push_back(std::abs(x - sc.limit));
            ns.push_back(static_cast<double>(n));
            errs.push_back(e);
        }
        const SlopeFit f = convergence_slope_trials(ns, errs, 1000, 6);
        const bool pass = f.slope >= -0.75 && f.slope <= -0.25;
        ok &= pass;
        detail += sc.name + fmt(" slope %.3f [CI %.3f, %.3f]; ", f.slope, f.ci_low, f.ci_high);
    }
    return {ok, detail + "need [-0.75, -0.25]"};
}

Outcome universality()
{
    bool ok = true;
    std::string detail;
    for (const auto& sc : scalar_cases()) {
        const auto g = finite_scalar_trials(sc.program, "c", 4096, 32, InitDistribution::named("gaussian"), 700);
        const auto r = finite_scalar_trials(sc.program, "c", 4096, 32, InitDistribution::named("rademacher"), 701);
        const double diff = std::abs(mean_of(g) - mean_of(r));
        const double sigma = std::hypot(se_of(g), se_of(r));
        ok &= diff <= 3 * sigma;
        detail += sc.name + fmt(" |gauss - rademacher| = %.2e (%.2f sigma); ", diff, diff / sigma);
    }
    return {ok, detail + "need <= 3 sigma at n=4096"};
}

// ---- 8 ----
Outcome gradient_check()
{
    double worst = 0;
    int params = 0;
    for (int L : {1, 2})
        for (const auto& e : backprop_check(L, 3, 64, "srelu", 8)) {
            worst = std::max(worst, e.rel_error);
            ++params;
        }
    return {worst <= 1e-6, fmt("%g parameter tensors, max relative error %.2e (tol 1e-6)", params, worst)};
}

// ---- 9 ----
Outcome kernel_dichotomy()
{
    const Dataset ds = make_dataset(10, 16, 4, 9);
    std::vector<Index> widths;
    for (int k = 6; k <= 12; ++k)
        widths.push_back(Index(1) << k);
    auto slope = [&](const char* name) {
        FiniteTrainConfig c;
        c.L = 2;
        c.xi = ds.xi;
        c.param = preset(name, 2);
        c.rule = UpdateRule::adam(0.9, 0.999, 1e-4);
        c.eps = ds.signal();
        c.eta = 0.2;
        c.trials = 8;
        c.seed = 99;
        const auto d = kernel_drift(c, widths, 2, default_threads());
        std::vector<std::pair<double, double>> pts;
        for (size_t i = 0; i < widths.size(); ++i)
            pts.emplace_back(static_cast<double>(widths[i]), d[i]);
        return convergence_slope(pts).slope;
    };
    const double ntp = slope("NTP"), mup = slope("muP");
    return {ntp <= -0.25 && std::abs(mup) < 0.15,
            fmt("NTP drift slope %.3f (need <= -0.25), muP drift slope %.3f (need |.| < 0.15)", ntp, mup)};
}

// ---- 10 ----
Outcome reductions()
{
    const Dataset ds = make_dataset(10, 20, 4, 10);
    std::string detail;
    bool ok = true;

    NTConfig nt;
    nt.L = 2;
    nt.xi = ds.xi;
    nt.rule = UpdateRule::adam(0.9, 0.999, 1e-4);
    nt.eps = ds.signal();
    nt.eta = 0.2;
    nt.steps = 4;
    nt.m = 20000;
    nt.seed = 10;
    NTConfig ntwd = nt;
    ntwd.wd_path = true;
    const double d_nt = trace_rel_diff(nt_dynamics(nt).f, nt_dynamics(ntwd).f);

    MuConfig mu;
    mu.L = 2;
    mu.xi = ds.xi;
    mu.rule = UpdateRule::adam(0.9, 0.999, 1e-4);
    mu.eps = ds.signal();
    mu.eta = 0.2;
    mu.steps = 3;
    mu.m = 4000;
    mu.seed = 10;
    MuConfig muwd = mu;
    muwd.mods.lambda = 0.0;
    const double d_mu = trace_rel_diff(mu_dynamics_deep(mu).f, mu_dynamics_deep(muwd).f);

    FiniteTrainConfig fc;
    fc.L = 2;
    fc.width = 128;
    fc.xi = ds.xi;
    fc.param = preset("muP", 2);
    fc.rule = UpdateRule::adam(0.9, 0.999, 1e-4);
    fc.eps = ds.signal();
    fc.eta = 0.2;
    fc.steps = 3;
    fc.seed = 10;
    FiniteTrainConfig fcwd = fc;
    fcwd.mods.lambda = 0.0;
    const double d_fin = trace_rel_diff(train_finite_mlp(fc).f[0], train_finite_mlp(fcwd).f[0]);
    const bool wd_ok = d_nt <= 1e-10 && d_mu <= 1e-10 && d_fin <= 1e-10;
    ok &= wd_ok;
    detail += fmt("lambda=0 vs plain: nt %.1e, mu %.1e, finite %.1e; ", d_nt, d_mu, d_fin);

    MuConfig m1 = mu;
    m1.L = 1;
    const auto sh = mu_dynamics_shallow(m1).f, dp = mu_dynamics_deep(m1).f;
    bool bitwise = true;
    for (size_t t = 0; t < sh.size(); ++t)
        bitwise &= (sh[t].array() == dp[t].array()).all();
    ok &= bitwise;
    detail += std::string("L=1 deep == shallow bitwise: ") + (bitwise ? "yes" : "no") + "; ";

    bool sign_ok = true;
    Rng rng = make_rng(10, {10});
    std::normal_distribution<double> nd(0.0, 3.0);
    for (int i = 0; i < 10000; ++i) {
        const double g[] = {nd(rng)};
        sign_ok &= q_scalar(UpdateRule::adam(0.9, 0.999, 1e-4), g) == q_scalar(UpdateRule::signsgd(1e-4), g);
    }
    NTConfig a1 = nt, s1 = nt;
    a1.steps = s1.steps = 1;
    s1.rule = UpdateRule::signsgd(1e-4);
    const auto fa = nt_dynamics(a1).f, fs = nt_dynamics(s1).f;
    sign_ok &= (fa[1].array() == fs[1].array()).all();
    FiniteTrainConfig fa1 = fc, fs1 = fc;
    fa1.steps = fs1.steps = 1;
    fs1.rule = UpdateRule::signsgd(1e-4);
    sign_ok &= (train_finite_mlp(fa1).f[0][1].array() == train_finite_mlp(fs1).f[0][1].array()).all();
    ok &= sign_ok;
    detail += std::string("Adam t=0 == SignSGD exactly: ") + (sign_ok ? "yes" : "no");
    return {ok, detail};
}

} // namespace

int main(int argc, char** argv)
{
    struct Criterion {
        std::string name;
        double budget; // seconds
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {"classification truth table", 1.0, truth_table},
        {"symmetry invariance", 120.0, symmetry_invariance},
        {"NTK reduction", 60.0, ntk_reduction},
        {"NT width sweep", 1800.0, [] { return sweep(SweepMode::nt); }},
        {"mu width sweep", 1800.0, [] { return sweep(SweepMode::mu); }},
        {"Master-Theorem rate", 600.0, master_rate},
        {"non-Gaussian universality", 300.0, universality},
        {"backprop gradient check", 60.0, gradient_check},
        {"feature-kernel dichotomy", 900.0, kernel_dichotomy},
        {"reductions", 60.0, reductions},
    };
    std::set<int> pick;
    for (int i = 1; i < argc; ++i)
        pick.insert(std::atoi(argv[i]));
    int failed = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!pick.empty() && !pick.count(id))
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > criteria[i].budget) {
            o.pass = false;
            o.detail += fmt(" [over the %.0f s budget]", criteria[i].budget);
        }
        std::printf("criterion %2d %s: %s (%.1f s) %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].name.c_str(),
                    secs, o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed ? 1 : 0;
}
