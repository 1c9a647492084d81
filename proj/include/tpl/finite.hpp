#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tpl/activation.hpp"
#include "tpl/ir.hpp"
#include "tpl/optim.hpp"
#include "tpl/param.hpp"

namespace tpl {

enum class InitKind { gaussian, rademacher, uniform };

struct InitDistribution {
    InitKind kind = InitKind::gaussian;
    static InitDistribution named(const std::string& s);
    std::string name() const;
    // one matrix entry with variance 1/n
    double draw(Rng& rng, double inv_sqrt_n) const;
};

struct Assignment {
    Index n = 0;
    std::map<std::string, MatrixXd> matrices;
    std::map<std::string, VectorXd> vectors;
    std::map<std::string, double> scalars;
    std::uint64_t key = 0;
};

// Matrices iid with variance 1/n, vectors iid N(0,1), scalars at their declared limits.
Assignment sample_init(const ProgramIR& p, Index n, const InitDistribution& dist, std::uint64_t seed);

struct ExecResult {
    std::map<std::string, VectorXd> vectors;
    std::map<std::string, double> scalars;
};

// Finite-width execution. OuterNonlin of order r+1 costs n^{r+1} evaluations.
ExecResult execute(const ProgramIR& p, const Assignment& a);

// Error signal eps_t : R^N -> R^N.
struct ErrorSignal {
    std::function<VectorXd(int t, const VectorXd& f)> fn;
    VectorXd operator()(int t, const VectorXd& f) const { return fn(t, f); }

    // (f - y) * mask; an empty mask means all ones
    static ErrorSignal mse(VectorXd y, VectorXd mask = {});
};

// Inputs xi (d x N) with columns ~ N(0, I/d), targets y ~ N(0,1), mask = 1 on the first
// n_train inputs and 0 on the tracked test inputs.
struct Dataset {
    MatrixXd xi;
    VectorXd y;
    VectorXd mask;
    int n_train = 0;
    int n_test = 0;
    ErrorSignal signal() const { return ErrorSignal::mse(y, mask); }
};

Dataset make_dataset(int d, int n_train, int n_test, std::uint64_t seed);

// Weights of an L-hidden-layer MLP in abcd form: W^l = mult[l-1] * w[l-1].
// w[0] is n x d, w[1..L-1] are n x n, w[L] is n x 1.
struct MlpWeights {
    int L = 1;
    Index n = 0, d = 0;
    std::vector<MatrixXd> w;
    std::vector<double> mult;
};

struct MlpForward {
    std::vector<MatrixXd> h; // h[l], l = 1..L (h[0] empty)
    std::vector<MatrixXd> x; // x[0] = xi, x[l] = phi(h[l])
    VectorXd f;
};

MlpWeights init_mlp(int L, Index n, const MatrixXd& xi, const AbcdParam& p, const InitDistribution& dist, Rng& rng);
MlpForward mlp_forward(const MlpWeights& m, const Activation& act, const MatrixXd& xi);
// Gradients of sum_i chi_i f(xi_i) wrt the trainable w^l (same shapes as m.w).
std::vector<MatrixXd> mlp_gradients(const MlpWeights& m, const Activation& act, const MlpForward& fw,
                                    const VectorXd& chi);

struct FiniteTrainConfig {
    int L = 2;
    Index width = 256;
    std::string activation = "srelu";
    MatrixXd xi;
    AbcdParam param;
    RuleTable rule;
    Modifiers mods;
    ErrorSignal eps;
    double eta = 0.1;
    int steps = 1;
    int trials = 1;
    std::uint64_t seed = 0;
    bool subtract_f0 = true;
    InitDistribution init;
    std::vector<int> kernel_layers; // feature kernels x^l^T x^l / n to record per step
    double diverge_at = 1e12;

    void check() const;
};

struct FiniteTrace {
    // f[trial][t] for t = 0..steps
    std::vector<std::vector<VectorXd>> f;
    // kernels[trial][k][t] for kernel_layers[k]
    std::vector<std::vector<std::vector<MatrixXd>>> kernels;
};

FiniteTrace train_finite_mlp(const FiniteTrainConfig& cfg, int threads = 1);

// One trial; the RNG stream is keyed by (seed, trial, width).
void train_finite_trial(const FiniteTrainConfig& cfg, int trial, std::vector<VectorXd>& f,
                        std::vector<std::vector<MatrixXd>>& kernels);

// CSV rows (trial, step, input, f_value).
void write_trace_csv(const std::string& path, const FiniteTrace& tr);

} // namespace tpl
