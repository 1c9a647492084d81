#include <doctest.h>

#include <cmath>

#include "tpl/finite.hpp"

using namespace tpl;

namespace {

FiniteTrainConfig small_config(const std::string& param, int L, Index n)
{
    const Dataset ds = make_dataset(4, 6, 2, 9);
    FiniteTrainConfig c;
    c.L = L;
    c.width = n;
    c.xi = ds.xi;
    c.param = preset(param, L);
    c.rule = UpdateRule::adam(0.9, 0.999, 1e-4);
    c.eps = ds.signal();
    c.eta = 0.05;
    c.steps = 3;
    c.trials = 2;
    c.seed = 4;
    return c;
}

double loss(const MlpWeights& m, const Activation& act, const MatrixXd& xi, const VectorXd& chi)
{
    return chi.dot(mlp_forward(m, act, xi).f);
}

} // namespace

TEST_CASE("dataset layout")
{
    const Dataset ds = make_dataset(10, 100, 4, 1);
    CHECK(ds.xi.rows() == 10);
    CHECK(ds.xi.cols() == 104);
    CHECK(ds.mask.head(100).sum() == 100);
    CHECK(ds.mask.tail(4).sum() == 0);
    CHECK(ds.xi.colwise().squaredNorm().mean() == doctest::Approx(1.0).epsilon(0.1));
    const VectorXd f = VectorXd::Zero(104);
    const VectorXd e = ds.signal()(0, f);
    CHECK(e.head(100).isApprox(-ds.y.head(100)));
    CHECK(e.tail(4).isZero());
}

TEST_CASE("mlp gradients match finite differences")
{
    const Activation act = Activation::named("srelu");
    const Dataset ds = make_dataset(3, 4, 0, 2);
    Rng rng = make_rng(1, {});
    MlpWeights m = init_mlp(3, 8, ds.xi, preset("muP", 3), InitDistribution{}, rng);
    const VectorXd chi = VectorXd::LinSpaced(4, -1, 1);
    const auto g = mlp_gradients(m, act, mlp_forward(m, act, ds.xi), chi);
    for (size_t l = 0; l < m.w.size(); ++l) {
        MatrixXd fd(m.w[l].rows(), m.w[l].cols());
        for (Index i = 0; i < fd.size(); ++i) {
            const double keep = m.w[l](i);
            m.w[l](i) = keep + 1e-6;
            const double p = loss(m, act, ds.xi, chi);
            m.w[l](i) = keep - 1e-6;
            const double q = loss(m, act, ds.xi, chi);
            m.w[l](i) = keep;
            fd(i) = (p - q) / 2e-6;
        }
        CHECK((fd - g[l]).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, g[l].cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("training is deterministic and subtracts f0")
{
    const FiniteTrainConfig c = small_config("muP", 2, 32);
    const FiniteTrace a = train_finite_mlp(c, 1);
    const FiniteTrace b = train_finite_mlp(c, 2);
    REQUIRE(a.f.size() == 2);
    REQUIRE(a.f[0].size() == 4);
    for (int k = 0; k < 2; ++k)
        for (int t = 0; t <= 3; ++t)
            CHECK(a.f[k][t] == b.f[k][t]);
    CHECK(a.f[0][0].isZero());
    CHECK(a.f[0][3].norm() > 0);
    CHECK(a.f[0][3] != a.f[1][3]);
}

TEST_CASE("zero steps and zero learning rate")
{
    FiniteTrainConfig c = small_config("NTP", 2, 16);
    c.steps = 0;
    CHECK(train_finite_mlp(c).f[0].size() == 1);
    c.steps = 2;
    c.eta = 0;
    const auto tr = train_finite_mlp(c);
    CHECK(tr.f[0][2].isZero());
}

TEST_CASE("weight decay with lambda zero is the plain path")
{
    FiniteTrainConfig c = small_config("muP", 2, 24);
    const FiniteTrace a = train_finite_mlp(c);
    c.mods.lambda = 0.0;
    const FiniteTrace b = train_finite_mlp(c);
    CHECK(a.f[1][3] == b.f[1][3]);
    c.mods.lambda = 0.1;
    CHECK(train_finite_mlp(c).f[1][3] != a.f[1][3]);
}

TEST_CASE("feature kernels are recorded")
{
    FiniteTrainConfig c = small_config("muP", 2, 24);
    c.kernel_layers = {1, 2};
    const FiniteTrace tr = train_finite_mlp(c);
    REQUIRE(tr.kernels[0].size() == 2);
    CHECK(tr.kernels[0][1].size() == 4);
    const MatrixXd& K = tr.kernels[0][1][0];
    CHECK(K.rows() == 8);
    CHECK((K - K.transpose()).norm() < 1e-12);
}

TEST_CASE("divergence is reported")
{
    FiniteTrainConfig c = small_config("SP", 2, 64);
    c.rule = UpdateRule::sgd();
    c.eta = 1e6;
    c.steps = 6;
    c.diverge_at = 1e6;
    try {
        train_finite_mlp(c);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(is_numerical(e.code()));
    }
}

TEST_CASE("invalid training configs")
{
    FiniteTrainConfig c = small_config("muP", 2, 0);
    CHECK_THROWS_AS(c.check(), Error);
    c = small_config("muP", 2, 8);
    c.eta = -1;
    CHECK_THROWS_AS(c.check(), Error);
}

TEST_CASE("sgd training is unchanged by the abc reduction and by symmetry shifts")
{
    FiniteTrainConfig c = small_config("NTP", 2, 48);
    c.rule = UpdateRule::sgd();
    const FiniteTrace a = train_finite_mlp(c);
    FiniteTrainConfig r = c;
    r.param = to_abc(c.param);
    const FiniteTrace b = train_finite_mlp(r);
    FiniteTrainConfig s = c;
    s.param = symmetry_shift(c.param, 2, Rational(1, 2));
    const FiniteTrace d = train_finite_mlp(s);
    for (int t = 0; t <= c.steps; ++t) {
        const double scale = std::max(a.f[0][t].norm(), 1e-300);
        CHECK((a.f[0][t] - b.f[0][t]).norm() <= 1e-12 * scale);
        CHECK((a.f[0][t] - d.f[0][t]).norm() <= 1e-10 * scale);
    }
}
