#include "tpl/ketvm.hpp"

#include <fstream>

namespace tpl {

const VectorXd& KetState::ket(const std::string& name) const
{
    auto it = index.find(name);
    if (it == index.end())
        throw Error(ErrorCode::UndefinedSymbol, "no ket named '" + name + "'");
    return cols[it->second];
}

namespace {

using DerivMap = std::map<std::pair<int, int>, VectorXd>;

void add_scaled(DerivMap& out, const DerivMap& in, const VectorXd& w)
{
    for (const auto& [key, col] : in) {
        auto it = out.find(key);
        if (it == out.end())
            out.emplace(key, col.cwiseProduct(w));
        else
            it->second += col.cwiseProduct(w);
    }
}

void add_scaled(DerivMap& out, const DerivMap& in, double w)
{
    for (const auto& [key, col] : in) {
        auto it = out.find(key);
        if (it == out.end())
            out.emplace(key, col * w);
        else
            it->second += col * w;
    }
}

int push_ket(KetState& s, const std::string& name, VectorXd col, DerivMap d)
{
    const int id = static_cast<int>(s.cols.size());
    s.names.push_back(name);
    s.index[name] = id;
    s.cols.push_back(std::move(col));
    s.deriv.push_back(std::move(d));
    return id;
}

} // namespace

KetState run_limit(const ProgramIR& p, const LimitOptions& opt)
{
    if (opt.m < 1)
        throw Error(ErrorCode::ZeroWidth, "sample count must be positive");
    const bool tracked = opt.dot == DotMode::tracked;
    for (const auto& d : validate(p, tracked))
        throw Error(d.code == "MissingPartial" ? ErrorCode::MissingPartial : ErrorCode::InvalidArgument,
                    "instruction " + std::to_string(d.index) + ": " + d.message);

    const Index m = opt.m;
    KetState s;
    s.m = m;
    for (size_t i = 0; i < p.matrices.size(); ++i) {
        s.registry_of[p.matrices[i]] = static_cast<int>(2 * i);
        s.registry_of[p.matrices[i] + "^T"] = static_cast<int>(2 * i + 1);
        s.registries.emplace_back(m, stream_key(opt.seed, {0x1a7, 2 * i}));
        s.registries.emplace_back(m, stream_key(opt.seed, {0x1a7, 2 * i + 1}));
    }
    s.pivot_cols.resize(s.registries.size());

    std::uint64_t tag = 0;
    for (const auto& v : p.vectors) {
        Rng rng = make_rng(opt.seed, {0x1417, tag++});
        VectorXd x(m);
        fill_normal(x.data(), m, rng);
        push_ket(s, v, std::move(x), {});
    }
    for (const auto& c : p.scalars)
        s.scalars[c.name] = c.limit;

    const double inv_m = 1.0 / static_cast<double>(m);
    for (size_t k = 0; k < p.instructions.size(); ++k) {
        const auto& ins = p.instructions[k];
        if (auto av = std::get_if<Avg>(&ins)) {
            s.scalars[av->dst] = s.ket(av->src).mean();
        } else if (auto mm = std::get_if<MatMul>(&ins)) {
            const int rid = s.registry_of.at(mm->transpose ? mm->matrix + "^T" : mm->matrix);
            const int did = rid ^ 1;
            const int src = s.index.at(mm->src);
            HatRegistry& reg = s.registries[rid];
            MatrixXd coeff;
            std::vector<int> piv;
            VectorXd col = reg.add(MatrixXd(s.cols[src]), &coeff, &piv).col(0);
            if (!piv.empty())
                s.pivot_cols[rid].push_back(src);

            DerivMap d;
            if (tracked)
                for (Index j = 0; j < coeff.rows(); ++j)
                    if (coeff(j, 0) != 0.0)
                        d.emplace(std::make_pair(rid, static_cast<int>(j)), VectorXd::Constant(m, coeff(j, 0)));

            // dot part: sum over the transposed registry's inputs
            const HatRegistry& dual = s.registries[did];
            const int r = dual.rank();
            if (r > 0) {
                VectorXd beta(r);
                if (tracked) {
                    const auto& dx = s.deriv[src];
                    for (int j = 0; j < r; ++j) {
                        auto it = dx.find({did, j});
                        beta(j) = it == dx.end() ? 0.0 : it->second.sum() * inv_m;
                    }
                } else {
                    beta = stein_coeffs(dual.latents(), MatrixXd(m, 0), MatrixXd(s.cols[src])).col(0);
                }
                col.noalias() += dual.whitened() * beta;
                if (tracked) {
                    const VectorXd gamma =
                        dual.factor().transpose().triangularView<Eigen::Upper>().solve(beta);
                    for (int q = 0; q < r; ++q)
                        if (gamma(q) != 0.0)
                            add_scaled(d, s.deriv[s.pivot_cols[did][q]], gamma(q));
                }
            }
            if (!col.allFinite())
                throw Error(ErrorCode::NumericalOverflow, "instruction " + std::to_string(k) + ": non-finite ket");
            push_ket(s, mm->dst, std::move(col), std::move(d));
        } else {
            const auto& o = std::get<OuterNonlin>(ins);
            const int nb = o.order();
            std::vector<std::vector<int>> ids(nb);
            for (int b = 0; b < nb; ++b)
                for (const auto& v : o.blocks[b])
                    ids[b].push_back(s.index.at(v));
            std::vector<double> cs;
            for (const auto& c : o.scalars)
                cs.push_back(s.scalars.at(c));
            const int K = nb > 1 ? opt.K : 1;
            std::vector<Perms> perms(nb);
            for (int b = 1; b < nb; ++b) {
                Rng rng = make_rng(opt.seed, {0x0e7, k, static_cast<std::uint64_t>(b)});
                perms[b] = make_perms(m, K, rng);
            }
            const int nargs = o.fn.vector_args();
            const int n0 = static_cast<int>(ids[0].size());
            std::vector<double> buf(nargs);
            VectorXd col(m);
            std::vector<VectorXd> part(tracked ? n0 : 0, VectorXd(m));
            for (Index a = 0; a < m; ++a) {
                for (int j = 0; j < n0; ++j)
                    buf[j] = s.cols[ids[0][j]](a);
                double acc = 0.0;
                std::vector<double> pacc(part.size(), 0.0);
                for (int c = 0; c < K; ++c) {
                    int off = n0;
                    for (int b = 1; b < nb; ++b) {
                        const Index ra = perms[b][c][a];
                        for (int id : ids[b])
                            buf[off++] = s.cols[id](ra);
                    }
                    acc += o.fn.eval(buf.data(), cs.data());
                    for (size_t j = 0; j < part.size(); ++j)
                        pacc[j] += o.fn.partials[j](buf.data(), cs.data());
                }
                col(a) = acc / K;
                for (size_t j = 0; j < part.size(); ++j)
                    part[j](a) = pacc[j] / K;
            }
            if (!col.allFinite())
                throw Error(ErrorCode::NumericalOverflow, "instruction " + std::to_string(k) + ": non-finite ket");
            DerivMap d;
            for (int j = 0; j < static_cast<int>(part.size()); ++j)
                add_scaled(d, s.deriv[ids[0][j]], part[j]);
            push_ket(s, o.dst, std::move(col), std::move(d));
        }
    }
    return s;
}

void write_snapshot(const std::string& path, const KetState& s, const std::vector<std::string>& columns)
{
    const std::vector<std::string>& names = columns.empty() ? s.names : columns;
    std::vector<const VectorXd*> cols;
    for (const auto& n : names)
        cols.push_back(&s.ket(n));
    std::ofstream os(path);
    if (!os)
        throw Error(ErrorCode::Io, "cannot write '" + path + "'");
    os.precision(17);
    for (size_t j = 0; j < names.size(); ++j)
        os << (j ? "," : "") << names[j];
    os << '\n';
    for (Index a = 0; a < s.m; ++a) {
        for (size_t j = 0; j < cols.size(); ++j)
            os << (j ? "," : "") << (*cols[j])(a);
        os << '\n';
    }
}

} // namespace tpl
