#include <doctest.h>

#include <cmath>

#include "tpl/finite.hpp"
#include "tpl/limits.hpp"

using namespace tpl;

namespace {

NTConfig nt_config(int L, int steps, Index m)
{
    const Dataset ds = make_dataset(5, 6, 2, 3);
    NTConfig c;
    c.L = L;
    c.xi = ds.xi;
    c.rule = UpdateRule::sgd();
    c.eps = ds.signal();
    c.eta = 0.3;
    c.steps = steps;
    c.m = m;
    c.seed = 12;
    return c;
}

MuConfig mu_config(int L, int steps, Index m)
{
    const Dataset ds = make_dataset(5, 6, 2, 3);
    MuConfig c;
    c.L = L;
    c.xi = ds.xi;
    c.rule = UpdateRule::adam(0.9, 0.999, 1e-4);
    c.eps = ds.signal();
    c.eta = 0.1;
    c.steps = steps;
    c.m = m;
    c.seed = 12;
    return c;
}

double max_diff(const std::vector<VectorXd>& a, const std::vector<VectorXd>& b)
{
    REQUIRE(a.size() == b.size());
    double d = 0;
    for (size_t t = 0; t < a.size(); ++t)
        d = std::max(d, (a[t] - b[t]).cwiseAbs().maxCoeff());
    return d;
}

} // namespace

TEST_CASE("nt operator with the identity update is the kernel")
{
    const NTConfig c = nt_config(2, 1, 40000);
    const NTKets k = nt_static_kets(2, Activation::named("srelu"), c.xi, 40000, 0.0, 1, 5);
    const VectorXd chi = VectorXd::LinSpaced(c.xi.cols(), -1, 1);
    const NTOperatorResult r = nt_operator(k, UpdateRule::sgd(), {chi});
    const VectorXd expect = nt_kernel(k) * chi;
    for (Index i = 0; i < chi.size(); ++i)
        CHECK(std::abs(r.value(i) - expect(i)) <= 5 * r.stderr_(i) + 1e-12);
}

TEST_CASE("nt kernel of a linear network")
{
    // identity activation, L = 1: x^1 = h^1 has bracket xi^T xi, dh = w with E w^2 = 1,
    // so K = xi^T xi (layer 1) + xi^T xi (output layer) up to MC noise
    const NTConfig c = nt_config(1, 1, 200000);
    const NTKets k = nt_static_kets(1, Activation::named("identity"), c.xi, 200000, 0.0, 1, 2);
    const MatrixXd G = c.xi.transpose() * c.xi;
    CHECK((nt_kernel(k) - 2 * G).cwiseAbs().maxCoeff() < 0.05 * G.cwiseAbs().maxCoeff());
}

TEST_CASE("nt dynamics are linear in the learning rate")
{
    NTConfig c = nt_config(2, 1, 20000);
    const DynamicsTrace a = nt_dynamics(c);
    c.eta *= 2;
    const DynamicsTrace b = nt_dynamics(c);
    CHECK(((b.f[1] - b.f[0]) - 2 * (a.f[1] - a.f[0])).norm() < 1e-12 * b.f[1].norm());
}

TEST_CASE("nt reductions")
{
    NTConfig c = nt_config(2, 3, 20000);
    c.rule = UpdateRule::adam(0.9, 0.999, 1e-4);
    const DynamicsTrace plain = nt_dynamics(c);
    CHECK(max_diff(plain.f, nt_dynamics(c).f) == 0.0);

    NTConfig wd = c;
    wd.wd_path = true;
    wd.mods.lambda = 0.0;
    CHECK(max_diff(plain.f, nt_dynamics(wd).f) <= 1e-10);

    NTConfig one = c;
    one.steps = 1;
    NTConfig sign = one;
    sign.rule = UpdateRule::signsgd(1e-4);
    CHECK(max_diff(nt_dynamics(one).f, nt_dynamics(sign).f) == 0.0);

    wd.mods.lambda = 0.2;
    CHECK(max_diff(plain.f, nt_dynamics(wd).f) > 1e-6);
}

TEST_CASE("nt f0 modes and kernels")
{
    NTConfig c = nt_config(2, 2, 5000);
    c.kernel_layers = {0, 2};
    const DynamicsTrace a = nt_dynamics(c);
    CHECK(a.f[0].isZero());
    CHECK(feature_kernel(a, 2).size() == 3);
    // the NT limit has frozen features
    CHECK((feature_kernel(a, 2)[2] - feature_kernel(a, 2)[0]).norm() == 0.0);
    CHECK_THROWS_AS(feature_kernel(a, 1), Error);
    c.f0 = F0Mode::gaussian;
    CHECK(nt_dynamics(c).f[0].norm() > 0);
    CHECK_THROWS_AS(f0_mode_from("nngp"), Error);
}

TEST_CASE("nt rejects weight-norm normalization")
{
    NTConfig c = nt_config(2, 1, 100);
    c.mods.clip = ClipMode::normalize;
    c.mods.source = NormSource::weight;
    CHECK_THROWS_AS(nt_dynamics(c), Error);
}

TEST_CASE("deep mu engine with one layer equals the shallow engine")
{
    const MuConfig c = mu_config(1, 3, 3000);
    const DynamicsTrace a = mu_dynamics_shallow(c);
    const DynamicsTrace b = mu_dynamics_deep(c);
    CHECK(max_diff(a.f, b.f) == 0.0);
    CHECK(a.f[0].isZero());
}

TEST_CASE("mu reductions and determinism")
{
    MuConfig c = mu_config(2, 2, 2000);
    const DynamicsTrace a = mu_dynamics_deep(c);
    CHECK(max_diff(a.f, mu_dynamics_deep(c).f) == 0.0);
    c.mods.lambda = 0.0;
    CHECK(max_diff(a.f, mu_dynamics_deep(c).f) <= 1e-10);
    c.mods.lambda = 0.3;
    CHECK(max_diff(a.f, mu_dynamics_deep(c).f) > 1e-8);
}

TEST_CASE("shallow mu limit agrees with wide muP training")
{
    MuConfig c = mu_config(1, 3, 20000);
    c.rule = UpdateRule::sgd();
    c.eta = 0.5;
    const DynamicsTrace lim = mu_dynamics_shallow(c);

    FiniteTrainConfig f;
    f.L = 1;
    f.width = 4096;
    f.xi = c.xi;
    f.param = preset("muP", 1);
    f.rule = c.rule;
    f.eps = c.eps;
    f.eta = c.eta;
    f.steps = 3;
    f.trials = 4;
    f.seed = 1;
    const FiniteTrace tr = train_finite_mlp(f);
    VectorXd mean = VectorXd::Zero(c.xi.cols());
    for (const auto& t : tr.f)
        mean += t[3] / tr.f.size();
    CHECK((mean - lim.f[3]).norm() < 0.1 * lim.f[3].norm());
}

TEST_CASE("mu feature kernels move")
{
    MuConfig c = mu_config(2, 2, 2000);
    c.kernel_layers = {2};
    const DynamicsTrace a = mu_dynamics_deep(c);
    const auto& K = feature_kernel(a, 2);
    REQUIRE(K.size() == 3);
    CHECK((K[1] - K[0]).norm() > 1e-3);
}
