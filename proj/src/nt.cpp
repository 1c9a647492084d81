#include "tpl/limits.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Eigenvalues>

namespace tpl {

MatrixXd sample_gaussian(const MatrixXd& S, Index m, Rng& rng)
{
    const Index k = S.rows();
    if (S.cols() != k)
        throw Error(ErrorCode::DimensionMismatch, "covariance must be square");
    if (k == 0)
        return MatrixXd(m, 0);
    const MatrixXd Ssym = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Ssym);
    const VectorXd& ev = es.eigenvalues();
    const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    if (ev.minCoeff() < -1e-8 * scale)
        throw Error(ErrorCode::CovarianceError,
                    "covariance has eigenvalue " + std::to_string(ev.minCoeff()) + " below tolerance");
    Index r0 = 0;
    while (r0 < k && ev(r0) <= 1e-12 * scale)
        ++r0;
    const Index r = k - r0;
    const MatrixXd F = es.eigenvectors().rightCols(r) * ev.tail(r).cwiseSqrt().asDiagonal();
    MatrixXd Z(m, r);
    fill_normal(Z.data(), Z.size(), rng);
    return Z * F.transpose();
}

namespace {

MatrixXd act_of(const Activation& a, const MatrixXd& h)
{
    return h.unaryExpr([&a](double v) { return a.f(v); });
}

// in place: h <- phi'(h) * dx
void to_dh(const Activation& a, MatrixXd& h, const MatrixXd& dx)
{
    h = h.binaryExpr(dx, [&a](double v, double d) { return a.df(v) * d; });
}

MatrixXd stack_gram(const std::vector<const MatrixXd*>& blocks, const std::vector<double>& c)
{
    const Index m = blocks[0]->rows(), N = blocks[0]->cols();
    const Index T = static_cast<Index>(blocks.size());
    MatrixXd G(T * N, T * N);
    for (Index s = 0; s < T; ++s)
        for (Index t = s; t < T; ++t) {
            MatrixXd b = blocks[s]->transpose() * *blocks[t];
            b *= c[s] * c[t] / static_cast<double>(m);
            G.block(s * N, t * N, N, N) = b;
            if (t != s)
                G.block(t * N, s * N, N, N) = b.transpose();
        }
    return G;
}

} // namespace

NTKets nt_static_kets(int L, const Activation& act, const MatrixXd& xi, Index m, double lambda, int T,
                      std::uint64_t seed, bool keep_pre)
{
    if (L < 1)
        throw Error(ErrorCode::InvalidArgument, "L must be >= 1");
    if (m < 1)
        throw Error(ErrorCode::ZeroWidth, "sample count must be positive");
    if (!(lambda >= 0.0 && lambda < 1.0))
        throw Error(ErrorCode::InvalidArgument, "weight decay must lie in [0, 1)");
    if (xi.cols() < 1)
        throw Error(ErrorCode::InvalidArgument, "need at least one input");
    NTKets k;
    k.L = L;
    k.m = m;
    k.lambda = lambda;
    k.xi = xi;
    const int nt = lambda == 0.0 ? 1 : T + 2;
    const Index N = xi.cols();
    std::vector<double> c(nt);
    for (int s = 0; s < nt; ++s)
        c[s] = std::pow(1.0 - lambda, s);
    k.times.resize(nt);
    for (auto& tk : k.times) {
        tk.x.resize(L + 1);
        tk.dh.resize(L + 1);
        if (keep_pre) {
            tk.h.resize(L + 1);
            tk.dx.resize(L + 1);
        }
    }

    // forward; dh[l] holds h until the backward pass
    const MatrixXd K0 = xi.transpose() * xi;
    for (int l = 1; l <= L; ++l) {
        MatrixXd C(nt * N, nt * N);
        if (l == 1) {
            for (int s = 0; s < nt; ++s)
                for (int t = 0; t < nt; ++t)
                    C.block(s * N, t * N, N, N) = c[s] * c[t] * K0;
        } else {
            std::vector<const MatrixXd*> xs;
            for (auto& tk : k.times)
                xs.push_back(&tk.x[l - 1]);
            C = stack_gram(xs, c);
        }
        Rng rng = make_rng(seed, {0x47, static_cast<std::uint64_t>(l)});
        MatrixXd H = sample_gaussian(C, m, rng);
        for (int s = 0; s < nt; ++s) {
            auto& tk = k.times[s];
            tk.dh[l] = H.middleCols(s * N, N);
            tk.x[l] = act_of(act, tk.dh[l]);
            if (keep_pre)
                tk.h[l] = tk.dh[l];
        }
    }

    // backward, independent of the forward kets
    Rng wr = make_rng(seed, {0x48});
    VectorXd w(m);
    fill_normal(w.data(), m, wr);
    for (int s = 0; s < nt; ++s) {
        const MatrixXd dx = (c[s] * w).replicate(1, N);
        auto& tk = k.times[s];
        to_dh(act, tk.dh[L], dx);
        if (keep_pre)
            tk.dx[L] = dx;
    }
    for (int l = L - 1; l >= 1; --l) {
        std::vector<const MatrixXd*> ds;
        for (auto& tk : k.times)
            ds.push_back(&tk.dh[l + 1]);
        const MatrixXd C = stack_gram(ds, c);
        Rng rng = make_rng(seed, {0x49, static_cast<std::uint64_t>(l)});
        const MatrixXd D = sample_gaussian(C, m, rng);
        for (int s = 0; s < nt; ++s) {
            auto& tk = k.times[s];
            const MatrixXd dx = D.middleCols(s * N, N);
            to_dh(act, tk.dh[l], dx);
            if (keep_pre)
                tk.dx[l] = dx;
        }
    }
    return k;
}

MatrixXd nt_kernel(const NTKets& k)
{
    const NTTimeKets& tk = k.at(0);
    MatrixXd K = (k.xi.transpose() * k.xi).cwiseProduct(bracket(tk.dh[1], tk.dh[1]));
    for (int l = 2; l <= k.L; ++l)
        K += bracket(tk.dh[l], tk.dh[l]).cwiseProduct(bracket(tk.x[l - 1], tk.x[l - 1]));
    K += bracket(tk.x[k.L], tk.x[k.L]);
    return K;
}

F0Mode f0_mode_from(const std::string& s)
{
    if (s == "zero")
        return F0Mode::zero;
    if (s == "gaussian")
        return F0Mode::gaussian;
    throw Error(ErrorCode::InvalidConfig, "unknown f0 mode '" + s + "' (zero or gaussian)");
}

namespace {

// One layer term of the tangent operator. Layer 1 pools over the rows of xi (summed), hidden
// layers pair samples through K permutations, the output layer pools over all samples.
struct LayerTerm {
    int l = 1;
    int L = 1;
    Perms perms;

    bool hidden() const { return l > 1 && l <= L; }

    ArrayXXd pair_array(const NTTimeKets& tk, const MatrixXd& xi, const VectorXd& chi) const
    {
        if (l == 1)
            return ((tk.dh[1] * chi.asDiagonal()) * xi.transpose()).array();
        if (l == L + 1)
            return (tk.x[L] * chi).array();
        const MatrixXd Xc = tk.dh[l] * chi.asDiagonal();
        const MatrixXd& Y = tk.x[l - 1];
        const Index m = Xc.rows(), N = Xc.cols();
        const int K = static_cast<int>(perms.size());
        ArrayXXd A(m, K);
        for (int k = 0; k < K; ++k)
            for (Index a = 0; a < m; ++a) {
                const Index b = perms[k][a];
                double acc = 0.0;
                for (Index i = 0; i < N; ++i)
                    acc += Xc(a, i) * Y(b, i);
                A(a, k) = acc;
            }
        return A;
    }

    // |X| = sqrt(E ||X||^2) over the pool
    double norm(const ArrayXXd& Q) const
    {
        if (l == 1)
            return std::sqrt(Q.square().sum() / static_cast<double>(Q.rows()));
        return std::sqrt(Q.square().mean());
    }

    // adds sum over samples of the row and column aggregates; returns the per-input value
    VectorXd contract(const ArrayXXd& Q, const NTTimeKets& tk, const MatrixXd& xi, MatrixXd* R, MatrixXd* C) const
    {
        if (l == 1) {
            const MatrixXd r = tk.dh[1].cwiseProduct(Q.matrix() * xi);
            if (R)
                *R += r;
            return r.colwise().mean().transpose();
        }
        if (l == L + 1) {
            const MatrixXd c = tk.x[L].array().colwise() * Q.col(0);
            if (C)
                *C += c;
            return c.colwise().mean().transpose();
        }
        const MatrixXd& X = tk.dh[l];
        const MatrixXd& Y = tk.x[l - 1];
        const Index m = X.rows(), N = X.cols();
        const int K = static_cast<int>(perms.size());
        MatrixXd out = MatrixXd::Zero(m, N);
        for (int k = 0; k < K; ++k) {
            const auto& pk = perms[k];
            for (Index i = 0; i < N; ++i)
                for (Index a = 0; a < m; ++a) {
                    const double v = Q(a, k) * Y(pk[a], i);
                    out(a, i) += v;
                    if (C)
                        (*C)(pk[a], i) += X(a, i) * v / K;
                }
        }
        out /= static_cast<double>(K);
        const MatrixXd r = X.cwiseProduct(out);
        if (R)
            *R += r;
        return r.colwise().mean().transpose();
    }
};

std::vector<LayerTerm> make_terms(int L, Index m, int K, std::uint64_t seed)
{
    std::vector<LayerTerm> terms;
    for (int l = 1; l <= L + 1; ++l) {
        LayerTerm t;
        t.l = l;
        t.L = L;
        if (t.hidden()) {
            Rng rng = make_rng(seed, {0x9a1, static_cast<std::uint64_t>(l)});
            t.perms = make_perms(m, K, rng);
        }
        terms.push_back(std::move(t));
    }
    return terms;
}

double tilde_nu(const LayerTerm& term, const ArrayXXd& Q, const Modifiers& mods)
{
    if (!mods.normalizing())
        return 1.0;
    double nu = term.norm(Q);
    if (mods.clip == ClipMode::clip)
        nu = std::min(nu, mods.theta0);
    if (!(nu > 0.0))
        throw Error(ErrorCode::ZeroNormUpdate, "update of layer " + std::to_string(term.l) + " has zero norm");
    return nu;
}

VectorXd col_var(const MatrixXd& A)
{
    const VectorXd mu = A.colwise().mean().transpose();
    const double m = static_cast<double>(A.rows());
    return ((A.rowwise() - mu.transpose()).array().square().colwise().sum() / std::max(m - 1.0, 1.0)).matrix();
}

VectorXd stderr_of(const MatrixXd& R, const MatrixXd& C)
{
    const double m = static_cast<double>(R.rows());
    return ((col_var(R) + col_var(C)) / m).cwiseSqrt();
}

void check_modifiers_nt(const Modifiers& mods)
{
    mods.check();
    if (mods.normalizing() && mods.source == NormSource::weight)
        throw Error(ErrorCode::InvalidConfig, "weight-norm normalization is not defined for the NT limit");
}

} // namespace

NTOperatorResult nt_operator(const NTKets& k, const RuleTable& rule, const std::vector<VectorXd>& chi_history,
                             const NTOptions& opt)
{
    if (chi_history.empty())
        throw Error(ErrorCode::InvalidArgument, "empty chi history");
    check_modifiers_nt(opt.mods);
    for (const auto& c : chi_history)
        if (c.size() != k.N())
            throw Error(ErrorCode::DimensionMismatch, "chi has length " + std::to_string(c.size()) + ", expected " +
                                                          std::to_string(k.N()));
    const int t = static_cast<int>(chi_history.size()) - 1;
    const auto terms = make_terms(k.L, k.m, opt.K, opt.seed);
    const NTTimeKets& now = k.at(t);
    MatrixXd R = MatrixXd::Zero(k.m, k.N()), C = MatrixXd::Zero(k.m, k.N());
    NTOperatorResult res;
    res.value = VectorXd::Zero(k.N());
    for (const auto& term : terms) {
        std::vector<ArrayXXd> hist;
        for (int s = 0; s <= t; ++s)
            hist.push_back(term.pair_array(k.at(s), k.xi, chi_history[s]));
        ArrayXXd Q = q_eval(rule, term.l, hist);
        Q /= tilde_nu(term, Q, opt.mods);
        res.value += term.contract(Q, now, k.xi, &R, &C);
    }
    res.stderr_ = stderr_of(R, C);
    return res;
}

void NTConfig::check() const
{
    if (L < 1)
        throw Error(ErrorCode::InvalidConfig, "L must be >= 1");
    if (xi.cols() < 1 || xi.rows() < 1)
        throw Error(ErrorCode::InvalidConfig, "dataset must have at least one input");
    if (!(eta >= 0))
        throw Error(ErrorCode::InvalidConfig, "eta must be >= 0");
    if (steps < 0)
        throw Error(ErrorCode::InvalidConfig, "steps must be >= 0");
    if (m < 1)
        throw Error(ErrorCode::ZeroWidth, "sample count must be positive");
    if (K < 1)
        throw Error(ErrorCode::InvalidConfig, "K must be >= 1");
    if (!eps.fn)
        throw Error(ErrorCode::InvalidConfig, "missing error signal");
    for (int l : kernel_layers)
        if (l < 0 || l > L)
            throw Error(ErrorCode::InvalidArgument, "kernel layer out of range");
    check_modifiers_nt(mods);
    for (int l = 1; l <= L + 1; ++l)
        rule.at(l).check(true);
}

DynamicsTrace nt_dynamics(const NTConfig& cfg)
{
    cfg.check();
    const NTKets kets = nt_static_kets(cfg.L, Activation::named(cfg.activation), cfg.xi, cfg.m, cfg.mods.lambda,
                                       cfg.steps, cfg.seed);
    return nt_dynamics(cfg, kets);
}

DynamicsTrace nt_dynamics(const NTConfig& cfg, const NTKets& kets)
{
    cfg.check();
    if (kets.L != cfg.L || kets.N() != cfg.xi.cols())
        throw Error(ErrorCode::DimensionMismatch, "kets do not match the configuration");
    const double lambda = cfg.mods.lambda;
    if (kets.lambda != lambda)
        throw Error(ErrorCode::InvalidConfig, "kets were built for a different weight decay");
    const Index m = kets.m;
    const int N = kets.N();
    const auto terms = make_terms(cfg.L, m, cfg.K, cfg.seed);

    DynamicsTrace tr;
    tr.kernel_layers = cfg.kernel_layers;
    tr.kernels.resize(cfg.kernel_layers.size());
    auto record_kernels = [&](int t) {
        const NTTimeKets& tk = kets.at(t);
        for (size_t j = 0; j < cfg.kernel_layers.size(); ++j) {
            const int l = cfg.kernel_layers[j];
            tr.kernels[j].push_back(l == 0 ? MatrixXd(kets.xi.transpose() * kets.xi) : bracket(tk.x[l], tk.x[l]));
        }
    };

    VectorXd f0 = VectorXd::Zero(N);
    if (cfg.f0 == F0Mode::gaussian) {
        Rng rng = make_rng(cfg.seed, {0xf0});
        const MatrixXd& xL = kets.at(0).x[cfg.L];
        f0 = sample_gaussian(bracket(xL, xL), 1, rng).row(0).transpose();
    }
    tr.f0 = f0;
    tr.f.push_back(f0);
    tr.stderr_.push_back(VectorXd::Zero(N));
    record_kernels(0);

    std::vector<QState> qs;
    for (const auto& term : terms) {
        const Index cols = term.l == 1 ? kets.xi.rows() : (term.hidden() ? cfg.K : 1);
        qs.emplace_back(cfg.rule.at(term.l), m, cols);
    }

    const bool wd = cfg.wd_path || lambda != 0.0;
    std::vector<ArrayXXd> acc(terms.size());
    VectorXd var = VectorXd::Zero(N);
    for (int t = 0; t < cfg.steps; ++t) {
        const VectorXd chi = cfg.eps(t, tr.f.back());
        if (chi.size() != N)
            throw Error(ErrorCode::DimensionMismatch, "error signal has wrong length");
        tr.chi.push_back(chi);
        MatrixXd R = MatrixXd::Zero(m, N), C = MatrixXd::Zero(m, N);
        VectorXd kq = VectorXd::Zero(N);
        const NTTimeKets& cur = kets.at(t);
        const NTTimeKets& next = kets.at(t + 1);
        for (size_t j = 0; j < terms.size(); ++j) {
            const ArrayXXd& q = qs[j].push(terms[j].pair_array(cur, kets.xi, chi));
            const double nu = tilde_nu(terms[j], q, cfg.mods);
            if (!wd) {
                kq += terms[j].contract(q / nu, next, kets.xi, &R, &C);
            } else {
                // sum_{s<=t} (1-lambda)^{t-s} Qbar_s
                if (t == 0)
                    acc[j] = q / nu;
                else
                    acc[j] = (1.0 - lambda) * acc[j] + q / nu;
                kq += terms[j].contract(acc[j], next, kets.xi, &R, &C);
            }
        }
        const VectorXd se = stderr_of(R, C);
        VectorXd f;
        if (!wd) {
            f = tr.f.back() - cfg.eta * kq;
            var += (cfg.eta * se).array().square().matrix();
        } else {
            f = f0 - cfg.eta * kq;
            var = (cfg.eta * se).array().square().matrix();
        }
        if (!f.allFinite())
            throw Error(ErrorCode::Diverged, "limit output is not finite at step " + std::to_string(t + 1));
        tr.f.push_back(f);
        tr.stderr_.push_back(var.cwiseSqrt());
        record_kernels(t + 1);
    }
    return tr;
}

const std::vector<MatrixXd>& feature_kernel(const DynamicsTrace& tr, int layer)
{
    for (size_t j = 0; j < tr.kernel_layers.size(); ++j)
        if (tr.kernel_layers[j] == layer)
            return tr.kernels[j];
    throw Error(ErrorCode::InvalidArgument, "layer " + std::to_string(layer) + " was not retained by the run");
}

std::vector<MatrixXd> feature_kernel(const FiniteTrace& tr, const std::vector<int>& layers, int layer, int trial)
{
    if (trial < 0 || trial >= static_cast<int>(tr.kernels.size()))
        throw Error(ErrorCode::InvalidArgument, "trial out of range");
    for (size_t j = 0; j < layers.size(); ++j)
        if (layers[j] == layer)
            return tr.kernels[trial].at(j);
    throw Error(ErrorCode::InvalidArgument, "layer " + std::to_string(layer) + " was not retained by the run");
}

void write_dynamics_csv(const std::string& path, const DynamicsTrace& tr)
{
    std::ofstream os(path);
    if (!os)
        throw Error(ErrorCode::Io, "cannot write '" + path + "'");
    os.precision(17);
    os << "step,input,f,mc_stderr\n";
    for (size_t t = 0; t < tr.f.size(); ++t)
        for (Index i = 0; i < tr.f[t].size(); ++i)
            os << t << ',' << i << ',' << tr.f[t](i) << ','
               << (t < tr.stderr_.size() ? tr.stderr_[t](i) : 0.0) << '\n';
}

void write_kernel_csv(const std::string& path, const std::vector<MatrixXd>& kernels)
{
    std::ofstream os(path);
    if (!os)
        throw Error(ErrorCode::Io, "cannot write '" + path + "'");
    os.precision(17);
    os << "step,i,j,value\n";
    for (size_t t = 0; t < kernels.size(); ++t)
        for (Index i = 0; i < kernels[t].rows(); ++i)
            for (Index j = 0; j < kernels[t].cols(); ++j)
                os << t << ',' << i << ',' << j << ',' << kernels[t](i, j) << '\n';
}

} // namespace tpl
