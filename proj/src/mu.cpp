#include "tpl/limits.hpp"

#include <cmath>

namespace tpl {

void MuConfig::check() const
{
    if (L < 1)
        throw Error(ErrorCode::InvalidConfig, "L must be >= 1");
    if (xi.cols() < 1 || xi.rows() < 1)
        throw Error(ErrorCode::InvalidConfig, "dataset must have at least one input");
    if (!(eta >= 0))
        throw Error(ErrorCode::InvalidConfig, "eta must be >= 0");
    if (steps < 0)
        throw Error(ErrorCode::InvalidConfig, "steps must be >= 0");
    if (m < 2)
        throw Error(ErrorCode::ZeroWidth, "sample count must be at least 2");
    if (block < 1)
        throw Error(ErrorCode::InvalidConfig, "block must be >= 1");
    if (!eps.fn)
        throw Error(ErrorCode::InvalidConfig, "missing error signal");
    for (int l : kernel_layers)
        if (l < 0 || l > L)
            throw Error(ErrorCode::InvalidArgument, "kernel layer out of range");
    mods.check();
    for (int l = 1; l <= L + 1; ++l)
        rule.at(l).check(true);
}

namespace {

// Pieces shared by the shallow and the deep engine.
struct VectorLayers {
    MatrixXd w1;  // m x d
    VectorXd wout; // m
    QState q_in, q_out;

    VectorLayers(const MuConfig& cfg)
        : q_in(cfg.rule.at(1), cfg.m, cfg.xi.rows()), q_out(cfg.rule.at(cfg.L + 1), cfg.m, 1)
    {
        Rng r1 = make_rng(cfg.seed, {0x31});
        w1 = normal_matrix(cfg.m, cfg.xi.rows(), r1);
        Rng r2 = make_rng(cfg.seed, {0x32});
        wout.resize(cfg.m);
        fill_normal(wout.data(), cfg.m, r2);
    }
};

MatrixXd phi(const Activation& a, const MatrixXd& h)
{
    return h.unaryExpr([&a](double v) { return a.f(v); });
}

MatrixXd dphi_times(const Activation& a, const MatrixXd& h, const MatrixXd& dx)
{
    return h.binaryExpr(dx, [&a](double v, double d) { return a.df(v) * d; });
}

VectorXd readout(const VectorXd& wout, const MatrixXd& xL)
{
    return xL.transpose() * wout / static_cast<double>(wout.size());
}

double vector_nu(const ArrayXXd& Q, const ArrayXXd& w, const Modifiers& mods, int layer)
{
    if (!mods.normalizing())
        return 1.0;
    const ArrayXXd& src = mods.source == NormSource::weight ? w : Q;
    // |X| = sqrt(E ||X||^2): rows are samples
    double nu = std::sqrt(src.square().sum() / static_cast<double>(src.rows()));
    if (mods.clip == ClipMode::clip)
        nu = std::min(nu, mods.theta0);
    if (!(nu > 0.0))
        throw Error(ErrorCode::ZeroNormUpdate, "update of layer " + std::to_string(layer) + " has zero norm");
    return nu;
}

void update_vectors(VectorLayers& v, const MuConfig& cfg, const MatrixXd& dh1, const MatrixXd& xL,
                    const VectorXd& chi)
{
    const ArrayXXd g_in = ((dh1 * chi.asDiagonal()) * cfg.xi.transpose()).array();
    const ArrayXXd g_out = (xL * chi).array();
    const ArrayXXd& q1 = v.q_in.push(g_in);
    const double nu1 = vector_nu(q1, v.w1.array(), cfg.mods, 1);
    const ArrayXXd& q2 = v.q_out.push(g_out);
    const double nu2 = vector_nu(q2, ArrayXXd(v.wout.array()), cfg.mods, cfg.L + 1);
    const double keep = 1.0 - cfg.mods.lambda;
    if (keep != 1.0) {
        v.w1 *= keep;
        v.wout *= keep;
    }
    v.w1.array() -= (cfg.eta / nu1) * q1;
    v.wout.array() -= (cfg.eta / nu2) * q2.col(0);
}

VectorXd f_stderr(const VectorXd& wout, const MatrixXd& xL, const VectorXd& wout0, const MatrixXd& xL0)
{
    const MatrixXd d = (xL.array().colwise() * wout.array() - xL0.array().colwise() * wout0.array()).matrix();
    const VectorXd mu = d.colwise().mean().transpose();
    const double m = static_cast<double>(d.rows());
    return ((d.rowwise() - mu.transpose()).array().square().colwise().sum() / (m * (m - 1.0))).sqrt().matrix();
}

void check_f(const VectorXd& f, int t)
{
    if (!f.allFinite())
        throw Error(ErrorCode::Diverged, "limit output is not finite at step " + std::to_string(t));
}

} // namespace

DynamicsTrace mu_dynamics_shallow(const MuConfig& cfg)
{
    cfg.check();
    if (cfg.L != 1)
        throw Error(ErrorCode::InvalidConfig, "the shallow engine needs L = 1");
    const Activation act = Activation::named(cfg.activation);
    const int N = static_cast<int>(cfg.xi.cols());
    VectorLayers v(cfg);
    const VectorXd wout0 = v.wout;
    MatrixXd x0;

    DynamicsTrace tr;
    tr.kernel_layers = cfg.kernel_layers;
    tr.kernels.resize(cfg.kernel_layers.size());
    VectorXd f0hat = VectorXd::Zero(N);
    for (int t = 0;; ++t) {
        const MatrixXd h = v.w1 * cfg.xi;
        const MatrixXd x = phi(act, h);
        VectorXd f = readout(v.wout, x);
        if (t == 0) {
            x0 = x;
            if (cfg.subtract_f0)
                f0hat = f;
            tr.f0 = f0hat;
        }
        f -= f0hat;
        check_f(f, t);
        tr.f.push_back(f);
        tr.stderr_.push_back(f_stderr(v.wout, x, wout0, x0));
        for (size_t j = 0; j < cfg.kernel_layers.size(); ++j) {
            const int l = cfg.kernel_layers[j];
            tr.kernels[j].push_back(l == 0 ? MatrixXd(cfg.xi.transpose() * cfg.xi) : bracket(x, x));
        }
        if (t == cfg.steps)
            break;
        const VectorXd chi = cfg.eps(t, f);
        tr.chi.push_back(chi);
        const MatrixXd dh = dphi_times(act, h, v.wout.replicate(1, N));
        update_vectors(v, cfg, dh, x, chi);
    }
    return tr;
}

namespace {

// Stored update of one hidden operator: Qbar_s over (dh_s, chi_s, x_s) with 1/nu_s.
struct HiddenLayer {
    HatRegistry fwd, bwd; // W_0 and W_0^T
    std::vector<MatrixXd> dh, x;
    std::vector<VectorXd> chi;
    std::vector<double> nu;
};

// sum_{s<t} w_s Qbar_s(|X_s>_chi <Y_s|) |Z>, with w_s = (1-lambda)^{t-1-s} / nu_s
MatrixXd operator_update(const HiddenLayer& hl, bool transposed, const MatrixXd& Z, const UpdateRule& rule,
                         double lambda, Index block)
{
    const int t = static_cast<int>(hl.chi.size());
    std::vector<double> w(t);
    for (int s = 0; s < t; ++s)
        w[s] = std::pow(1.0 - lambda, t - 1 - s) / hl.nu[s];
    const double inv_m = 1.0 / static_cast<double>(Z.rows());

    auto X = [&](int s) -> const MatrixXd& { return transposed ? hl.x[s] : hl.dh[s]; };
    auto Y = [&](int s) -> const MatrixXd& { return transposed ? hl.dh[s] : hl.x[s]; };

    if (rule.kind == RuleKind::sgd || rule.kind == RuleKind::momentum) {
        // linear in the history: collapse to sum_r c_r |X_r>_chi <Y_r|Z>
        MatrixXd out = MatrixXd::Zero(Z.rows(), Z.cols());
        for (int r = 0; r < t; ++r) {
            double c = 0.0;
            if (rule.kind == RuleKind::sgd)
                c = w[r];
            else
                for (int s = r; s < t; ++s)
                    c += w[s] * std::pow(rule.beta, s - r);
            const MatrixXd YZ = Y(r).transpose() * Z * inv_m;
            out.noalias() += X(r) * (c * hl.chi[r]).asDiagonal() * YZ;
        }
        return out;
    }
    std::vector<OuterTerm> terms;
    for (int s = 0; s < t; ++s)
        terms.push_back(OuterTerm{&X(s), hl.chi[s], &Y(s)});
    ArgHistoryFn fn = [&rule, &w](const std::vector<const ArrayXXd*>& h) {
        return q_weighted_prefix(rule, h, std::span<const double>(w));
    };
    OuterOptions opt;
    opt.full_pool = true;
    opt.block = block;
    return apply_outer(terms, fn, Z, opt);
}

// |Qbar_t| over all pairs, for normalization of the newest stored update
double hidden_norm(const HiddenLayer& hl, const UpdateRule& rule, Index block)
{
    const int T = static_cast<int>(hl.chi.size());
    std::vector<double> w(T, 0.0);
    w[T - 1] = 1.0;
    std::vector<OuterTerm> terms;
    for (int s = 0; s < T; ++s)
        terms.push_back(OuterTerm{&hl.dh[s], hl.chi[s], &hl.x[s]});
    ArgHistoryFn fn = [&rule, &w](const std::vector<const ArrayXXd*>& h) {
        return q_weighted_prefix(rule, h, std::span<const double>(w));
    };
    const Index m = hl.x[0].rows();
    double ss = 0.0;
    for (Index r0 = 0; r0 < m; r0 += block) {
        const Index rows = std::min(block, m - r0);
        ss += outer_full_values(terms, fn, r0, rows).square().sum();
    }
    return std::sqrt(ss / (static_cast<double>(m) * static_cast<double>(m)));
}

// W_0 applied to Y: hat from `reg` plus the dot part over the inputs of `dual`.
MatrixXd initial_operator(HatRegistry& reg, const HatRegistry& dual, const MatrixXd& Y, const MatrixXd& controls)
{
    MatrixXd out = reg.add(Y);
    if (dual.rank() > 0) {
        const MatrixXd beta = stein_coeffs(dual.latents(), controls, Y);
        out.noalias() += dual.whitened() * beta;
    }
    return out;
}

} // namespace

DynamicsTrace mu_dynamics_deep(const MuConfig& cfg)
{
    cfg.check();
    const int L = cfg.L;
    const Activation act = Activation::named(cfg.activation);
    const int N = static_cast<int>(cfg.xi.cols());
    const Index m = cfg.m;
    const double lambda = cfg.mods.lambda;
    VectorLayers v(cfg);
    const VectorXd wout0 = v.wout;
    MatrixXd xL0, controls;

    std::vector<HiddenLayer> hidden(L + 1); // index l = 2..L
    for (int l = 2; l <= L; ++l) {
        hidden[l].fwd = HatRegistry(m, stream_key(cfg.seed, {0x5f, static_cast<std::uint64_t>(l)}));
        hidden[l].bwd = HatRegistry(m, stream_key(cfg.seed, {0x5b, static_cast<std::uint64_t>(l)}));
    }

    DynamicsTrace tr;
    tr.kernel_layers = cfg.kernel_layers;
    tr.kernels.resize(cfg.kernel_layers.size());
    VectorXd f0hat = VectorXd::Zero(N);
    std::vector<MatrixXd> h(L + 1), x(L + 1);
    for (int t = 0;; ++t) {
        const double decay = std::pow(1.0 - lambda, t);
        h[1] = v.w1 * cfg.xi;
        x[1] = phi(act, h[1]);
        if (t == 0) {
            controls.resize(m, N + 1);
            controls << x[1], v.wout;
        }
        for (int l = 2; l <= L; ++l) {
            HiddenLayer& hl = hidden[l];
            h[l] = initial_operator(hl.fwd, hl.bwd, x[l - 1], controls);
            if (decay != 1.0)
                h[l] *= decay;
            if (!hl.chi.empty())
                h[l] -= cfg.eta * operator_update(hl, false, x[l - 1], cfg.rule.at(l), lambda, cfg.block);
            x[l] = phi(act, h[l]);
        }
        VectorXd f = readout(v.wout, x[L]);
        if (t == 0) {
            xL0 = x[L];
            if (cfg.subtract_f0)
                f0hat = f;
            tr.f0 = f0hat;
        }
        f -= f0hat;
        check_f(f, t);
        tr.f.push_back(f);
        tr.stderr_.push_back(f_stderr(v.wout, x[L], wout0, xL0));
        for (size_t j = 0; j < cfg.kernel_layers.size(); ++j) {
            const int l = cfg.kernel_layers[j];
            tr.kernels[j].push_back(l == 0 ? MatrixXd(cfg.xi.transpose() * cfg.xi) : bracket(x[l], x[l]));
        }
        if (t == cfg.steps)
            break;
        const VectorXd chi = cfg.eps(t, f);
        tr.chi.push_back(chi);

        // backward
        std::vector<MatrixXd> dh(L + 1);
        dh[L] = dphi_times(act, h[L], v.wout.replicate(1, N));
        for (int l = L; l >= 2; --l) {
            HiddenLayer& hl = hidden[l];
            MatrixXd dx = initial_operator(hl.bwd, hl.fwd, dh[l], controls);
            if (decay != 1.0)
                dx *= decay;
            if (!hl.chi.empty())
                dx -= cfg.eta * operator_update(hl, true, dh[l], cfg.rule.at(l), lambda, cfg.block);
            dh[l - 1] = dphi_times(act, h[l - 1], dx);
        }

        // updates
        for (int l = 2; l <= L; ++l) {
            HiddenLayer& hl = hidden[l];
            hl.dh.push_back(dh[l]);
            hl.x.push_back(x[l - 1]);
            hl.chi.push_back(chi);
            double nu = 1.0;
            if (cfg.mods.normalizing() && cfg.mods.source == NormSource::update) {
                hl.nu.push_back(1.0);
                nu = hidden_norm(hl, cfg.rule.at(l), cfg.block);
                if (cfg.mods.clip == ClipMode::clip)
                    nu = std::min(nu, cfg.mods.theta0);
                if (!(nu > 0.0))
                    throw Error(ErrorCode::ZeroNormUpdate, "update of layer " + std::to_string(l) + " has zero norm");
                hl.nu.back() = nu;
            } else {
                hl.nu.push_back(nu);
            }
        }
        update_vectors(v, cfg, dh[1], x[L], chi);
    }
    return tr;
}

} // namespace tpl
