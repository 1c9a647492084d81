#include "tpl/finite.hpp"

#include <cmath>
#include <fstream>

namespace tpl {

MlpWeights init_mlp(int L, Index n, const MatrixXd& xi, const AbcdParam& p, const InitDistribution& dist, Rng& rng)
{
    if (n < 1)
        throw Error(ErrorCode::ZeroWidth, "width must be positive");
    if (p.L != L)
        throw Error(ErrorCode::DimensionMismatch, "parametrization has L=" + std::to_string(p.L) + ", network L=" +
                                                      std::to_string(L));
    MlpWeights m;
    m.L = L;
    m.n = n;
    m.d = xi.rows();
    const double nn = static_cast<double>(n);
    for (int l = 1; l <= L + 1; ++l) {
        const Index rows = n;
        const Index cols = l == 1 ? m.d : (l == L + 1 ? 1 : n);
        const double sd = std::pow(nn, -p.B(l).to_double());
        MatrixXd w(rows, cols);
        for (Index k = 0; k < w.size(); ++k)
            w.data()[k] = dist.draw(rng, sd);
        m.w.push_back(std::move(w));
        m.mult.push_back(std::pow(nn, -p.A(l).to_double()));
    }
    return m;
}

namespace {

MatrixXd apply_act(const Activation& act, const MatrixXd& h)
{
    return h.unaryExpr([&act](double v) { return act.f(v); });
}

} // namespace

MlpForward mlp_forward(const MlpWeights& m, const Activation& act, const MatrixXd& xi)
{
    if (xi.rows() != m.d)
        throw Error(ErrorCode::DimensionMismatch, "input dimension differs from the network");
    MlpForward fw;
    fw.h.resize(m.L + 1);
    fw.x.resize(m.L + 1);
    fw.x[0] = xi;
    for (int l = 1; l <= m.L; ++l) {
        MatrixXd h = m.w[l - 1] * fw.x[l - 1];
        h *= m.mult[l - 1];
        fw.x[l] = apply_act(act, h);
        fw.h[l] = std::move(h);
    }
    fw.f = (fw.x[m.L].transpose() * m.w[m.L]) * m.mult[m.L];
    return fw;
}

std::vector<MatrixXd> mlp_gradients(const MlpWeights& m, const Activation& act, const MlpForward& fw,
                                    const VectorXd& chi)
{
    const int L = m.L;
    std::vector<MatrixXd> g(L + 1);
    g[L] = (fw.x[L] * chi) * m.mult[L];
    MatrixXd dx = (m.w[L] * chi.transpose()) * m.mult[L];
    for (int l = L; l >= 1; --l) {
        MatrixXd dh = fw.h[l].binaryExpr(dx, [&act](double h, double d) { return act.df(h) * d; });
        g[l - 1].noalias() = dh * fw.x[l - 1].transpose();
        g[l - 1] *= m.mult[l - 1];
        if (l > 1) {
            dx.noalias() = m.w[l - 1].transpose() * dh;
            dx *= m.mult[l - 1];
        }
    }
    return g;
}

void FiniteTrainConfig::check() const
{
    if (L < 1)
        throw Error(ErrorCode::InvalidConfig, "L must be >= 1");
    if (width < 1)
        throw Error(ErrorCode::ZeroWidth, "width must be positive");
    if (param.L != L)
        throw Error(ErrorCode::InvalidConfig, "parametrization L differs from network L");
    param.check();
    if (xi.cols() < 1 || xi.rows() < 1)
        throw Error(ErrorCode::InvalidConfig, "dataset must have at least one input");
    if (!(eta >= 0))
        throw Error(ErrorCode::InvalidConfig, "eta must be >= 0");
    if (steps < 0 || trials < 1)
        throw Error(ErrorCode::InvalidConfig, "steps must be >= 0 and trials >= 1");
    if (!eps.fn)
        throw Error(ErrorCode::InvalidConfig, "missing error signal");
    for (int l : kernel_layers)
        if (l < 0 || l > L)
            throw Error(ErrorCode::InvalidArgument, "kernel layer out of range");
    mods.check();
    for (int l = 1; l <= L + 1; ++l)
        rule.at(l).check();
}

void train_finite_trial(const FiniteTrainConfig& cfg, int trial, std::vector<VectorXd>& f,
                        std::vector<std::vector<MatrixXd>>& kernels)
{
    const int L = cfg.L;
    const Index n = cfg.width;
    const double nn = static_cast<double>(n);
    const Activation act = Activation::named(cfg.activation);
    Rng rng = make_rng(cfg.seed, {0x7a11, static_cast<std::uint64_t>(trial), static_cast<std::uint64_t>(n)});
    MlpWeights m = init_mlp(L, n, cfg.xi, cfg.param, cfg.init, rng);

    std::vector<QState> qs;
    std::vector<double> scale_in(L + 1), lr(L + 1), e(L + 1);
    for (int l = 1; l <= L + 1; ++l) {
        qs.emplace_back(cfg.rule.at(l), m.w[l - 1].rows(), m.w[l - 1].cols());
        scale_in[l - 1] = std::pow(nn, cfg.param.D(l).to_double());
        lr[l - 1] = cfg.eta * std::pow(nn, -cfg.param.C(l).to_double());
        e[l - 1] = cfg.param.E(l).to_double();
    }

    MlpForward fw = mlp_forward(m, act, cfg.xi);
    const VectorXd f0 = fw.f;
    auto record = [&](const MlpForward& cur) {
        f.push_back(cfg.subtract_f0 ? VectorXd(cur.f - f0) : cur.f);
        for (size_t k = 0; k < cfg.kernel_layers.size(); ++k) {
            const MatrixXd& x = cur.x[cfg.kernel_layers[k]];
            kernels[k].push_back(x.transpose() * x / static_cast<double>(x.rows()));
        }
    };
    f.clear();
    kernels.assign(cfg.kernel_layers.size(), {});
    record(fw);

    const double keep = 1.0 - cfg.mods.lambda;
    for (int t = 0; t < cfg.steps; ++t) {
        const VectorXd chi = cfg.eps(t, f.back());
        std::vector<MatrixXd> g = mlp_gradients(m, act, fw, chi);
        for (int l = 0; l <= L; ++l) {
            g[l] *= scale_in[l];
            const ArrayXXd& q = qs[l].push(g[l].array());
            g[l].resize(0, 0);
            const double nu = modifier_norm(q, m.w[l].array(), cfg.mods, nn, e[l]);
            if (keep != 1.0)
                m.w[l] *= keep;
            m.w[l].array() -= (lr[l] / nu) * q;
        }
        fw = mlp_forward(m, act, cfg.xi);
        if (!fw.f.allFinite() || fw.f.cwiseAbs().maxCoeff() > cfg.diverge_at)
            throw Error(ErrorCode::Diverged, "output exceeded " + std::to_string(cfg.diverge_at) + " at step " +
                                                 std::to_string(t + 1) + " (trial " + std::to_string(trial) + ")");
        record(fw);
    }
}

FiniteTrace train_finite_mlp(const FiniteTrainConfig& cfg, int threads)
{
    cfg.check();
    FiniteTrace tr;
    tr.f.resize(cfg.trials);
    tr.kernels.resize(cfg.trials);
    parallel_for(cfg.trials, threads, [&](int k) { train_finite_trial(cfg, k, tr.f[k], tr.kernels[k]); });
    return tr;
}

void write_trace_csv(const std::string& path, const FiniteTrace& tr)
{
    std::ofstream os(path);
    if (!os)
        throw Error(ErrorCode::Io, "cannot write '" + path + "'");
    os.precision(17);
    os << "trial,step,input,f_value\n";
    for (size_t k = 0; k < tr.f.size(); ++k)
        for (size_t t = 0; t < tr.f[k].size(); ++t)
            for (Index i = 0; i < tr.f[k][t].size(); ++i)
                os << k << ',' << t << ',' << i << ',' << tr.f[k][t](i) << '\n';
}

} // namespace tpl
