#include "tpl/ketvm.hpp"

#include <algorithm>
#include <numeric>

namespace tpl {

ArgHistoryFn scalar_arg_fn(const FunctionRef& fn)
{
    if (fn.vector_args() != 1 || fn.scalars != 0)
        throw Error(ErrorCode::ArityMismatch, "outer product function must take exactly one argument");
    return [f = fn.eval](const std::vector<const ArrayXXd*>& a) -> ArrayXXd {
        return a.back()->unaryExpr([&f](double v) { return f(&v, nullptr); });
    };
}

Perms make_perms(Index m, int K, Rng& rng)
{
    if (K < 1)
        throw Error(ErrorCode::InvalidArgument, "need at least one copy");
    Perms p(K, std::vector<Index>(m));
    for (auto& v : p) {
        std::iota(v.begin(), v.end(), Index(0));
        std::shuffle(v.begin(), v.end(), rng);
    }
    return p;
}

namespace {

void check_terms(const std::vector<OuterTerm>& terms)
{
    if (terms.empty())
        throw Error(ErrorCode::InvalidArgument, "outer product needs at least one term");
    const Index rx = terms[0].X->rows(), ry = terms[0].Y->rows();
    for (const auto& t : terms) {
        if (!t.X || !t.Y)
            throw Error(ErrorCode::InvalidArgument, "outer term without kets");
        if (t.X->cols() != t.chi.size() || t.Y->cols() != t.chi.size())
            throw Error(ErrorCode::DimensionMismatch, "outer term: chi length differs from the ket count");
        if (t.X->rows() != rx || t.Y->rows() != ry)
            throw Error(ErrorCode::DimensionMismatch, "outer terms differ in sample count");
    }
}

} // namespace

ArrayXXd outer_copy_values(const std::vector<OuterTerm>& terms, const ArgHistoryFn& fn, const Perms& perms)
{
    check_terms(terms);
    const Index m = terms[0].X->rows();
    if (terms[0].Y->rows() != m)
        throw Error(ErrorCode::DimensionMismatch, "copies mode needs equal sample counts");
    const int K = static_cast<int>(perms.size());
    std::vector<ArrayXXd> A(terms.size(), ArrayXXd(m, K));
    for (size_t s = 0; s < terms.size(); ++s) {
        const MatrixXd Xc = *terms[s].X * terms[s].chi.asDiagonal();
        const MatrixXd& Y = *terms[s].Y;
        const Index q = Y.cols();
        for (int k = 0; k < K; ++k) {
            const auto& pk = perms[k];
            for (Index a = 0; a < m; ++a) {
                const Index b = pk[a];
                double acc = 0.0;
                for (Index i = 0; i < q; ++i)
                    acc += Xc(a, i) * Y(b, i);
                A[s](a, k) = acc;
            }
        }
    }
    std::vector<const ArrayXXd*> ptr;
    for (const auto& a : A)
        ptr.push_back(&a);
    return fn(ptr);
}

MatrixXd contract_copies(const ArrayXXd& phi, const MatrixXd& Z, const Perms& perms)
{
    const Index m = phi.rows();
    const int K = static_cast<int>(perms.size());
    if (Z.rows() != m || phi.cols() != K)
        throw Error(ErrorCode::DimensionMismatch, "contract_copies: shape mismatch");
    MatrixXd out = MatrixXd::Zero(m, Z.cols());
    for (int k = 0; k < K; ++k) {
        const auto& pk = perms[k];
        for (Index j = 0; j < Z.cols(); ++j)
            for (Index a = 0; a < m; ++a)
                out(a, j) += phi(a, k) * Z(pk[a], j);
    }
    return out / static_cast<double>(K);
}

ArrayXXd outer_full_values(const std::vector<OuterTerm>& terms, const ArgHistoryFn& fn, Index row0, Index rows)
{
    check_terms(terms);
    std::vector<ArrayXXd> A(terms.size());
    for (size_t s = 0; s < terms.size(); ++s) {
        const MatrixXd Xc = terms[s].X->middleRows(row0, rows) * terms[s].chi.asDiagonal();
        A[s] = (Xc * terms[s].Y->transpose()).array();
    }
    std::vector<const ArrayXXd*> ptr;
    for (const auto& a : A)
        ptr.push_back(&a);
    return fn(ptr);
}

MatrixXd apply_outer(const std::vector<OuterTerm>& terms, const ArgHistoryFn& fn, const MatrixXd& Z,
                     const OuterOptions& opt)
{
    check_terms(terms);
    const Index m = terms[0].X->rows();
    const Index pool = terms[0].Y->rows();
    if (Z.rows() != pool)
        throw Error(ErrorCode::DimensionMismatch, "apply_outer: Z must live on the pool samples");
    if (opt.full_pool || opt.sum_pool) {
        MatrixXd out(m, Z.cols());
        const double norm = opt.sum_pool ? 1.0 : 1.0 / static_cast<double>(pool);
        const Index B = std::max<Index>(1, opt.block);
        for (Index r0 = 0; r0 < m; r0 += B) {
            const Index rows = std::min(B, m - r0);
            const ArrayXXd phi = outer_full_values(terms, fn, r0, rows);
            out.middleRows(r0, rows).noalias() = phi.matrix() * Z * norm;
        }
        return out;
    }
    Rng rng = make_rng(opt.seed, {0x0c0b1e5});
    const Perms perms = make_perms(m, opt.K, rng);
    return contract_copies(outer_copy_values(terms, fn, perms), Z, perms);
}

VectorXd apply_outer(const FunctionRef& fn, const MatrixXd& X, const VectorXd& chi, const MatrixXd& Y,
                     const VectorXd& Z, const OuterOptions& opt)
{
    std::vector<OuterTerm> terms{OuterTerm{&X, chi, &Y}};
    return apply_outer(terms, scalar_arg_fn(fn), MatrixXd(Z), opt).col(0);
}

MatrixXd bracket(const MatrixXd& X, const MatrixXd& Y)
{
    if (X.rows() != Y.rows())
        throw Error(ErrorCode::DimensionMismatch, "bracket: kets differ in sample count");
    return X.transpose() * Y / static_cast<double>(X.rows());
}

} // namespace tpl
