#include "tpl/ketvm.hpp"

#include <cmath>

namespace tpl {

HatRegistry::HatRegistry(Index m, std::uint64_t seed, double tol)
    : m_(m), rng_(stream_key(seed, {0x4a7})), tol_(tol), Z_(m, 0), U_(m, 0), L_(0, 0)
{
    if (m < 1)
        throw Error(ErrorCode::ZeroWidth, "sample count must be positive");
}

MatrixXd HatRegistry::add(const MatrixXd& Y, MatrixXd* coeff, std::vector<int>* pivots)
{
    if (Y.rows() != m_)
        throw Error(ErrorCode::DimensionMismatch, "hat input has wrong sample count");
    const Index k = Y.cols();
    const Index r = rank();
    const double inv_m = 1.0 / static_cast<double>(m_);

    MatrixXd ell = r > 0 ? MatrixXd(U_.transpose() * Y * inv_m) : MatrixXd::Zero(0, k);
    MatrixXd S = Y.transpose() * Y * inv_m;
    double scale = 0.0;
    for (Index j = 0; j < k; ++j)
        scale = std::max(scale, S(j, j));
    if (r > 0)
        S.noalias() -= ell.transpose() * ell;

    // pivoted Cholesky of the Schur complement
    VectorXd d = S.diagonal();
    for (Index j = 0; j < k; ++j)
        if (d(j) < -1e-8 * std::max(scale, 1e-300))
            throw Error(ErrorCode::CovarianceError, "hat covariance is not positive semidefinite (residual " +
                                                        std::to_string(d(j)) + ")");
    const double thr = tol_ * std::max(scale, 1e-300);
    MatrixXd P = MatrixXd::Zero(k, k);
    std::vector<int> piv;
    std::vector<bool> used(k, false);
    for (Index q = 0; q < k; ++q) {
        Index j = -1;
        double best = thr;
        for (Index i = 0; i < k; ++i)
            if (!used[i] && d(i) > best) {
                best = d(i);
                j = i;
            }
        if (j < 0)
            break;
        const double s = std::sqrt(d(j));
        for (Index i = 0; i < k; ++i) {
            if (used[i] && i != j)
                continue;
            double v = S(i, j);
            for (Index c = 0; c < q; ++c)
                v -= P(i, c) * P(j, c);
            P(i, q) = v / s;
        }
        used[j] = true;
        piv.push_back(static_cast<int>(j));
        P(j, q) = s;
        for (Index i = 0; i < k; ++i)
            if (!used[i])
                d(i) -= P(i, q) * P(i, q);
        d(j) = 0.0;
    }
    const Index q = static_cast<Index>(piv.size());
    P.conservativeResize(k, q);

    MatrixXd Znew(m_, q);
    fill_normal(Znew.data(), Znew.size(), rng_);
    MatrixXd hats = Znew * P.transpose();
    if (r > 0)
        hats.noalias() += Z_ * ell;

    if (q > 0) {
        MatrixXd B(q, q), A(q, r), R(m_, q);
        for (Index a = 0; a < q; ++a) {
            B.row(a) = P.row(piv[a]);
            if (r > 0)
                A.row(a) = ell.col(piv[a]).transpose();
            R.col(a) = Y.col(piv[a]);
        }
        if (r > 0)
            R.noalias() -= U_ * A.transpose();
        MatrixXd Unew = B.triangularView<Eigen::Lower>().solve(R.transpose()).transpose();

        MatrixXd Lnew = MatrixXd::Zero(r + q, r + q);
        Lnew.topLeftCorner(r, r) = L_;
        Lnew.bottomLeftCorner(q, r) = A;
        Lnew.bottomRightCorner(q, q) = B.triangularView<Eigen::Lower>();
        L_ = std::move(Lnew);
        Z_.conservativeResize(m_, r + q);
        Z_.rightCols(q) = Znew;
        U_.conservativeResize(m_, r + q);
        U_.rightCols(q) = Unew;
    }
    if (coeff) {
        coeff->resize(r + q, k);
        if (r > 0)
            coeff->topRows(r) = ell;
        coeff->bottomRows(q) = P.transpose();
    }
    if (pivots)
        *pivots = piv;
    return hats;
}

MatrixXd stein_coeffs(const MatrixXd& Z, const MatrixXd& C, const MatrixXd& X)
{
    const Index m = Z.rows(), r = Z.cols(), c = C.cols();
    if (C.rows() != m && c > 0)
        throw Error(ErrorCode::DimensionMismatch, "controls have wrong sample count");
    if (X.rows() != m)
        throw Error(ErrorCode::DimensionMismatch, "targets have wrong sample count");
    if (r == 0)
        return MatrixXd::Zero(0, X.cols());
    const Index p = r + c + 1;
    MatrixXd G(p, p);
    MatrixXd rhs(p, X.cols());
    G.setZero();
    G.topLeftCorner(r, r).noalias() = Z.transpose() * Z;
    const VectorXd zs = Z.colwise().sum().transpose();
    G.block(0, r + c, r, 1) = zs;
    rhs.topRows(r) = Z.transpose() * X;
    if (c > 0) {
        G.block(0, r, r, c) = Z.transpose() * C;
        G.block(r, r, c, c) = C.transpose() * C;
        G.block(r, r + c, c, 1) = C.colwise().sum().transpose();
        rhs.middleRows(r, c) = C.transpose() * X;
    }
    G(p - 1, p - 1) = static_cast<double>(m);
    rhs.row(p - 1) = X.colwise().sum();
    const MatrixXd Gt = G.transpose();
    G.triangularView<Eigen::StrictlyLower>() = Gt;
    Eigen::LDLT<MatrixXd> ldlt(G);
    MatrixXd beta = ldlt.solve(rhs);
    return beta.topRows(r);
}

} // namespace tpl
