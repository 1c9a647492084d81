#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tpl/finite.hpp"
#include "tpl/limits.hpp"

namespace tpl {

// ---- width sweeps ----

enum class SweepMode { nt, mu };
SweepMode sweep_mode_from(const std::string& s);
std::string to_string(SweepMode m);

struct SweepConfig {
    SweepMode mode = SweepMode::nt;
    std::vector<Index> widths{64, 512, 4096};
    int L = 4;
    std::string activation = "srelu";
    std::string preset; // empty: NTP for nt, muP for mu
    int d = 10;
    int n_train = 100;
    int n_test = 4;
    RuleTable rule = UpdateRule::adam(0.9, 0.999, 1e-4);
    Modifiers mods;
    double eta = 0.2;
    int steps = 8;
    int trials = 10;
    bool subtract_f0 = true;
    Index m = 0; // limit samples; 0 picks 200000 (nt) or 20000 (mu)
    int K = 8;
    Index block = 64;
    std::uint64_t seed = 0;
    int threads = 1;

    void check() const;
    Index samples() const { return m > 0 ? m : (mode == SweepMode::nt ? 200000 : 20000); }
    std::string param_name() const { return !preset.empty() ? preset : (mode == SweepMode::nt ? "NTP" : "muP"); }
};

struct WidthResult {
    Index width = 0;
    bool ok = true;
    std::string error;
    std::vector<std::vector<VectorXd>> trials; // [trial][t]
    std::vector<VectorXd> mean, spread, gap;   // [t], spread = trial std
};

struct SweepReport {
    SweepConfig config;
    std::vector<VectorXd> limit, limit_stderr; // [t]
    std::vector<WidthResult> widths;
    int cells = 0;          // (step >= 1, input) cells compared
    int decreasing = 0;     // gap at the largest width < gap at the smallest
    int monotone = 0;       // gap strictly decreasing across all widths
    double frac_decreasing = 0.0;
    double frac_monotone = 0.0;
    double sign_test_p = 1.0;
    double gap_slope = 0.0; // log-log slope of the mean gap vs width
    nlohmann::json metadata; // timings and timestamp; the only non-deterministic field
};

SweepReport width_sweep(const SweepConfig& cfg);

nlohmann::json sweep_config_to_json(const SweepConfig& c);
SweepConfig sweep_config_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const SweepReport& r);
SweepReport report_from_json(const nlohmann::json& j);

// report.json plus one CSV per tracked (test) input; returns the written paths.
std::vector<std::string> write_sweep_files(const std::string& dir, const SweepReport& r);

// One-sided sign test: P(X >= k) for X ~ Binomial(n, 1/2).
double sign_test_p(int k, int n);

// ---- convergence rates ----

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double ci_low = 0.0, ci_high = 0.0; // 95%
    int points = 0;
};

// Least-squares slope of log(error) vs log(n); the CI is the normal-theory interval.
// Needs >= 3 points spanning >= 2 octaves (TooFewPoints).
SlopeFit convergence_slope(const std::vector<std::pair<double, double>>& pts);

// errors[w][k] are per-trial absolute errors at width ns[w]; the fitted error is the trial mean
// and the CI comes from resampling trials.
SlopeFit convergence_slope_trials(const std::vector<double>& ns, const std::vector<std::vector<double>>& errors,
                                  int resamples = 500, std::uint64_t seed = 0);

// ---- Master-Theorem checks ----

// Finite values of scalar `name` over independent trials at width n.
std::vector<double> finite_scalar_trials(const ProgramIR& p, const std::string& name, Index n, int trials,
                                         const InitDistribution& dist, std::uint64_t seed);

// c = <x, W^T W x> / n with x standard normal
ProgramIR gram_program();
// <x^L, x^L> / n of the MLP program on one input
ProgramIR nngp_program(int L, const std::string& activation, const std::vector<double>& xi);
// limit of nngp_program by Gauss-Hermite quadrature
double nngp_limit(int L, const std::string& activation, const std::vector<double>& xi, int nodes = 120);

// Probabilists' Gauss-Hermite rule: E f(z) = sum_i w_i f(x_i).
void gauss_hermite(int nodes, std::vector<double>& x, std::vector<double>& w);

// ---- gradient check ----

struct GradCheckEntry {
    std::string param;
    double rel_error = 0.0;
};

// Backprop-program gradients of sum(y) wrt every parameter of the L-layer MLP program at width
// n against central differences.
std::vector<GradCheckEntry> backprop_check(int L, int d, Index n, const std::string& activation, std::uint64_t seed,
                                           double step = 1e-5);

// ---- feature-kernel drift ----

// mean over trials of ||K_1 - K_0||_F for `layer` at each width
std::vector<double> kernel_drift(FiniteTrainConfig cfg, const std::vector<Index>& widths, int layer, int threads = 1);

} // namespace tpl
