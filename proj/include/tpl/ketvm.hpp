#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tpl/ir.hpp"

namespace tpl {

// Hat-kets of one matrix (W or W^T), realized in latent form: hats = Z * coeff with Z iid N(0,1).
// Adding inputs Y conditions on all earlier inputs so that the covariance of every pair of hats
// is the empirical bracket of their inputs.
class HatRegistry {
public:
    HatRegistry() = default;
    HatRegistry(Index m, std::uint64_t seed, double tol = 1e-10);

    // Y is m x k. Returns the m x k hat columns; `coeff` receives ((rank after) x k) such that
    // hats = latents() * coeff. `pivots` receives the columns of Y that added latents.
    MatrixXd add(const MatrixXd& Y, MatrixXd* coeff = nullptr, std::vector<int>* pivots = nullptr);

    Index m() const { return m_; }
    int rank() const { return static_cast<int>(Z_.cols()); }
    const MatrixXd& latents() const { return Z_; }
    // whitened inputs U = Y_piv L^{-T}; U^T U / m = I
    const MatrixXd& whitened() const { return U_; }
    const MatrixXd& factor() const { return L_; }

private:
    Index m_ = 0;
    Rng rng_;
    double tol_ = 1e-10;
    MatrixXd Z_, U_, L_;
};

// Least-squares coefficients of each column of X on [Z, controls, 1]; returns the rows for Z
// (rank x cols(X)). Estimates E[dX/dZ_j] by Stein's lemma when Z is iid N(0,1) independent of
// the controls.
MatrixXd stein_coeffs(const MatrixXd& Z, const MatrixXd& controls, const MatrixXd& X);

// ---- nonlinear outer products ----

// One argument history entry: A(a, b) = sum_i chi_i X(a, i) Y(b, i).
struct OuterTerm {
    const MatrixXd* X = nullptr; // rows indexed by the output sample a
    VectorXd chi;
    const MatrixXd* Y = nullptr; // rows indexed by the pool sample b
};

// Vectorized function of the argument history A_0..A_{T-1} (equally shaped arrays).
using ArgHistoryFn = std::function<ArrayXXd(const std::vector<const ArrayXXd*>&)>;

ArgHistoryFn scalar_arg_fn(const FunctionRef& fn); // single-argument fn, uses the last entry

using Perms = std::vector<std::vector<Index>>; // K permutations of [0, m)

Perms make_perms(Index m, int K, Rng& rng);

// Copies mode: values Phi(a, k) = fn(A_.(a, perm_k(a))); m x K.
ArrayXXd outer_copy_values(const std::vector<OuterTerm>& terms, const ArgHistoryFn& fn, const Perms& perms);
// out(a, j) = mean_k Phi(a, k) Z(perm_k(a), j)
MatrixXd contract_copies(const ArrayXXd& phi, const MatrixXd& Z, const Perms& perms);

// Full-pool values for output rows [row0, row0 + rows): rows x pool.
ArrayXXd outer_full_values(const std::vector<OuterTerm>& terms, const ArgHistoryFn& fn, Index row0, Index rows);

struct OuterOptions {
    bool full_pool = false;
    bool sum_pool = false; // sum over the pool instead of mean (deterministic pools like xi)
    int K = 8;
    Index block = 64;
    std::uint64_t seed = 0;
};

// Column(s) of phi(|X>_chi <Y|)|Z>: out(a, j) = E_b fn(A_.(a, b)) Z(b, j).
MatrixXd apply_outer(const std::vector<OuterTerm>& terms, const ArgHistoryFn& fn, const MatrixXd& Z,
                     const OuterOptions& opt);

// Single-term convenience form with a FunctionRef of one argument.
VectorXd apply_outer(const FunctionRef& fn, const MatrixXd& X, const VectorXd& chi, const MatrixXd& Y,
                     const VectorXd& Z, const OuterOptions& opt);

// entry (i, j) = mean over samples of X_i * Y_j
MatrixXd bracket(const MatrixXd& X, const MatrixXd& Y);

// ---- program execution in the limit ----

enum class DotMode { tracked, stein };

struct LimitOptions {
    Index m = 100000;
    int K = 8;
    std::uint64_t seed = 0;
    DotMode dot = DotMode::tracked;
};

struct KetState {
    Index m = 0;
    std::vector<std::string> names;
    std::map<std::string, int> index;
    std::vector<VectorXd> cols;
    // derivative of each column wrt latent ids (registry, latent) -> column
    std::vector<std::map<std::pair<int, int>, VectorXd>> deriv;
    std::map<std::string, double> scalars;
    std::map<std::string, int> registry_of; // "W" or "W^T" -> registry id
    std::vector<HatRegistry> registries;
    std::vector<std::vector<int>> pivot_cols; // per registry: ket ids of pivot inputs in order

    const VectorXd& ket(const std::string& name) const;
    bool has(const std::string& name) const { return index.count(name) > 0; }
};

KetState run_limit(const ProgramIR& p, const LimitOptions& opt);

// Columnar CSV: header of column names, then m rows.
void write_snapshot(const std::string& path, const KetState& s, const std::vector<std::string>& columns = {});

} // namespace tpl
