#include "tpl/finite.hpp"

#include <cmath>

namespace tpl {

InitDistribution InitDistribution::named(const std::string& s)
{
    InitDistribution d;
    if (s == "gaussian")
        d.kind = InitKind::gaussian;
    else if (s == "rademacher")
        d.kind = InitKind::rademacher;
    else if (s == "uniform")
        d.kind = InitKind::uniform;
    else
        throw Error(ErrorCode::InvalidConfig, "unknown init distribution '" + s + "'");
    return d;
}

std::string InitDistribution::name() const
{
    switch (kind) {
    case InitKind::gaussian: return "gaussian";
    case InitKind::rademacher: return "rademacher";
    case InitKind::uniform: return "uniform";
    }
    return "?";
}

double InitDistribution::draw(Rng& rng, double s) const
{
    switch (kind) {
    case InitKind::gaussian: {
        std::normal_distribution<double> nd(0.0, 1.0);
        return s * nd(rng);
    }
    case InitKind::rademacher: return (rng() >> 63) ? s : -s;
    case InitKind::uniform: {
        std::uniform_real_distribution<double> u(-std::sqrt(3.0), std::sqrt(3.0));
        return s * u(rng);
    }
    }
    return 0.0;
}

Assignment sample_init(const ProgramIR& p, Index n, const InitDistribution& dist, std::uint64_t seed)
{
    if (n < 1)
        throw Error(ErrorCode::ZeroWidth, "width must be positive");
    Assignment a;
    a.n = n;
    a.key = seed;
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    std::uint64_t tag = 0;
    for (const auto& m : p.matrices) {
        Rng rng = make_rng(seed, {1, tag++});
        MatrixXd W(n, n);
        for (Index k = 0; k < W.size(); ++k)
            W.data()[k] = dist.draw(rng, s);
        a.matrices[m] = std::move(W);
    }
    for (const auto& v : p.vectors) {
        Rng rng = make_rng(seed, {2, tag++});
        VectorXd x(n);
        fill_normal(x.data(), n, rng);
        a.vectors[v] = std::move(x);
    }
    for (const auto& c : p.scalars)
        a.scalars[c.name] = c.limit;
    return a;
}

namespace {

void overflow(size_t k, const std::string& what)
{
    throw Error(ErrorCode::NumericalOverflow, "instruction " + std::to_string(k) + ": non-finite value in " + what);
}

} // namespace

ExecResult execute(const ProgramIR& p, const Assignment& a)
{
    const Index n = a.n;
    if (n < 1)
        throw Error(ErrorCode::ZeroWidth, "width must be positive");
    ExecResult r;
    for (const auto& v : p.vectors) {
        auto it = a.vectors.find(v);
        if (it == a.vectors.end() || it->second.size() != n)
            throw Error(ErrorCode::DimensionMismatch, "assignment lacks vector '" + v + "' of width n");
        r.vectors[v] = it->second;
    }
    for (const auto& c : p.scalars) {
        auto it = a.scalars.find(c.name);
        r.scalars[c.name] = it == a.scalars.end() ? c.limit : it->second;
    }
    for (const auto& m : p.matrices) {
        auto it = a.matrices.find(m);
        if (it == a.matrices.end() || it->second.rows() != n || it->second.cols() != n)
            throw Error(ErrorCode::DimensionMismatch, "assignment lacks matrix '" + m + "' of size n x n");
    }

    for (size_t k = 0; k < p.instructions.size(); ++k) {
        const auto& ins = p.instructions[k];
        if (auto av = std::get_if<Avg>(&ins)) {
            const double c = r.vectors.at(av->src).mean();
            if (!std::isfinite(c))
                overflow(k, av->dst);
            r.scalars[av->dst] = c;
        } else if (auto mm = std::get_if<MatMul>(&ins)) {
            const MatrixXd& W = a.matrices.at(mm->matrix);
            const VectorXd& x = r.vectors.at(mm->src);
            VectorXd y = mm->transpose ? VectorXd(W.transpose() * x) : VectorXd(W * x);
            if (!y.allFinite())
                overflow(k, mm->dst);
            r.vectors[mm->dst] = std::move(y);
        } else {
            const auto& o = std::get<OuterNonlin>(ins);
            const int nb = o.order();
            std::vector<std::vector<const VectorXd*>> cols(nb);
            for (int b = 0; b < nb; ++b)
                for (const auto& v : o.blocks[b])
                    cols[b].push_back(&r.vectors.at(v));
            std::vector<double> cs;
            for (const auto& c : o.scalars)
                cs.push_back(r.scalars.at(c));
            std::vector<double> buf(o.fn.vector_args());
            std::vector<int> off(nb + 1, 0);
            for (int b = 0; b < nb; ++b)
                off[b + 1] = off[b] + static_cast<int>(cols[b].size());
            const int r_ = nb - 1;
            double norm = 1.0;
            for (int i = 0; i < r_; ++i)
                norm *= static_cast<double>(n);
            VectorXd y(n);
            std::vector<Index> beta(r_, 0);
            for (Index alpha = 0; alpha < n; ++alpha) {
                for (size_t j = 0; j < cols[0].size(); ++j)
                    buf[j] = (*cols[0][j])(alpha);
                double acc = 0.0;
                std::fill(beta.begin(), beta.end(), 0);
                for (;;) {
                    for (int b = 1; b < nb; ++b)
                        for (size_t j = 0; j < cols[b].size(); ++j)
                            buf[off[b] + j] = (*cols[b][j])(beta[b - 1]);
                    acc += o.fn.eval(buf.data(), cs.data());
                    int q = r_ - 1;
                    while (q >= 0 && ++beta[q] == n)
                        beta[q--] = 0;
                    if (q < 0)
                        break;
                }
                y(alpha) = acc / norm;
            }
            if (!y.allFinite())
                overflow(k, o.dst);
            r.vectors[o.dst] = std::move(y);
        }
    }
    return r;
}

ErrorSignal ErrorSignal::mse(VectorXd y, VectorXd mask)
{
    if (mask.size() == 0)
        mask = VectorXd::Ones(y.size());
    if (mask.size() != y.size())
        throw Error(ErrorCode::DimensionMismatch, "mask and targets differ in length");
    ErrorSignal e;
    e.fn = [y = std::move(y), mask = std::move(mask)](int, const VectorXd& f) -> VectorXd {
        if (f.size() != y.size())
            throw Error(ErrorCode::DimensionMismatch, "output and targets differ in length");
        return ((f - y).array() * mask.array()).matrix();
    };
    return e;
}

Dataset make_dataset(int d, int n_train, int n_test, std::uint64_t seed)
{
    if (d < 1 || n_train + n_test < 1)
        throw Error(ErrorCode::InvalidArgument, "dataset needs d >= 1 and at least one input");
    Dataset ds;
    const int N = n_train + n_test;
    Rng rng = make_rng(seed, {0xda7a});
    ds.xi = normal_matrix(d, N, rng) / std::sqrt(static_cast<double>(d));
    ds.y.resize(N);
    fill_normal(ds.y.data(), N, rng);
    ds.mask = VectorXd::Zero(N);
    ds.mask.head(n_train).setOnes();
    ds.n_train = n_train;
    ds.n_test = n_test;
    return ds;
}

} // namespace tpl
