#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tpl/activation.hpp"
#include "tpl/finite.hpp"
#include "tpl/ketvm.hpp"
#include "tpl/optim.hpp"

namespace tpl {

// Per-time kets of the NT limit. Layer vectors are indexed by l (entry 0 unused), each m x N.
struct NTTimeKets {
    std::vector<MatrixXd> x;  // x[l], l = 1..L
    std::vector<MatrixXd> dh; // dh[l], l = 1..L
    std::vector<MatrixXd> h, dx; // only with keep_pre
};

struct NTKets {
    int L = 1;
    Index m = 0;
    double lambda = 0.0;
    MatrixXd xi;                   // d x N
    std::vector<NTTimeKets> times; // a single entry when lambda == 0

    int N() const { return static_cast<int>(xi.cols()); }
    const NTTimeKets& at(int s) const { return times.size() == 1 ? times[0] : times.at(s); }
};

// lambda > 0 builds times 0..T+1 jointly.
NTKets nt_static_kets(int L, const Activation& act, const MatrixXd& xi, Index m, double lambda, int T,
                      std::uint64_t seed, bool keep_pre = false);

// Mean-zero Gaussian samples (m x k) with covariance S; PSD up to a relative tolerance.
MatrixXd sample_gaussian(const MatrixXd& S, Index m, Rng& rng);

// sum_l bracket(dh^l, dh^l) * bracket(x^{l-1}, x^{l-1}) at time 0, with xi^T xi for l = 1 and an
// all-ones backward kernel for the output layer.
MatrixXd nt_kernel(const NTKets& k);

struct NTOperatorResult {
    VectorXd value;
    VectorXd stderr_; // MC standard error per input
};

struct NTOptions {
    int K = 8;
    std::uint64_t seed = 0;
    Modifiers mods; // clip/normalize tilde; lambda is ignored here
};

// K(chi_0..chi_t) with the bar read as Q_t of each layer over the history; the pair arrays of
// step s use the kets of time s, the contraction uses time t.
NTOperatorResult nt_operator(const NTKets& k, const RuleTable& rule, const std::vector<VectorXd>& chi_history,
                             const NTOptions& opt = {});

enum class F0Mode { zero, gaussian };
F0Mode f0_mode_from(const std::string& s);

struct DynamicsTrace {
    std::vector<VectorXd> f;      // t = 0..T
    std::vector<VectorXd> chi;    // t = 0..T-1
    std::vector<VectorXd> stderr_; // per step
    std::vector<int> kernel_layers;
    std::vector<std::vector<MatrixXd>> kernels; // kernels[k][t]
    VectorXd f0; // the subtracted or sampled initial output
};

struct NTConfig {
    int L = 2;
    std::string activation = "srelu";
    MatrixXd xi;
    RuleTable rule;
    Modifiers mods;
    ErrorSignal eps;
    double eta = 0.1;
    int steps = 1;
    Index m = 200000;
    int K = 8;
    std::uint64_t seed = 0;
    F0Mode f0 = F0Mode::zero;
    bool wd_path = false; // use the weight-decay recursion even when lambda == 0
    std::vector<int> kernel_layers;

    void check() const;
};

DynamicsTrace nt_dynamics(const NTConfig& cfg);
// Same, on prebuilt kets (shared between runs).
DynamicsTrace nt_dynamics(const NTConfig& cfg, const NTKets& kets);

struct MuConfig {
    int L = 1;
    std::string activation = "srelu";
    MatrixXd xi;
    RuleTable rule;
    Modifiers mods;
    ErrorSignal eps;
    double eta = 0.1;
    int steps = 1;
    Index m = 20000;
    Index block = 64;
    std::uint64_t seed = 0;
    bool subtract_f0 = true;
    std::vector<int> kernel_layers;

    void check() const;
};

DynamicsTrace mu_dynamics_shallow(const MuConfig& cfg);
DynamicsTrace mu_dynamics_deep(const MuConfig& cfg);

// Kernels of `layer` recorded by a run; throws InvalidArgument when the layer was not retained.
const std::vector<MatrixXd>& feature_kernel(const DynamicsTrace& tr, int layer);
// Finite mode: x^T x / n per step of one trial.
std::vector<MatrixXd> feature_kernel(const FiniteTrace& tr, const std::vector<int>& layers, int layer, int trial = 0);

// (step, input, f, mc_stderr)
void write_dynamics_csv(const std::string& path, const DynamicsTrace& tr);
// (step, i, j, value)
void write_kernel_csv(const std::string& path, const std::vector<MatrixXd>& kernels);

} // namespace tpl
