#include <doctest.h>

#include <cmath>
#include <vector>

#include "tpl/optim.hpp"

using namespace tpl;

namespace {

// textbook Adam with bias correction, written as a recursion
double adam_reference(const std::vector<double>& g, double b1, double b2, double eps)
{
    double m = 0, v = 0;
    const int T = static_cast<int>(g.size());
    for (int t = 0; t < T; ++t) {
        m = b1 * m + (1 - b1) * g[t];
        v = b2 * v + (1 - b2) * g[t] * g[t];
    }
    const double mh = m / (1 - std::pow(b1, T));
    const double vh = v / (1 - std::pow(b2, T));
    return mh / std::sqrt(vh + eps * eps);
}

} // namespace

TEST_CASE("adam matches the textbook recursion")
{
    const std::vector<double> g{0.3, -1.2, 0.7, 2.5, -0.1, 0.05};
    const UpdateRule r = UpdateRule::adam(0.9, 0.999, 1e-4);
    for (size_t t = 1; t <= g.size(); ++t) {
        const std::vector<double> h(g.begin(), g.begin() + t);
        CHECK(q_scalar(r, h) == doctest::Approx(adam_reference(h, 0.9, 0.999, 1e-4)).epsilon(1e-12));
    }
}

TEST_CASE("adam at t = 0 is signsgd")
{
    for (double g : {1e-6, -3.0, 0.25, 1e3}) {
        const double h[] = {g};
        CHECK(q_scalar(UpdateRule::adam(0.9, 0.999, 1e-4), h) == q_scalar(UpdateRule::signsgd(1e-4), h));
    }
    const double z[] = {-2.0};
    CHECK(q_scalar(UpdateRule::signsgd(0.0), z) == -1.0);
}

TEST_CASE("momentum and sgd")
{
    const std::vector<double> g{1.0, 2.0, -1.0};
    CHECK(q_scalar(UpdateRule::sgd(), g) == -1.0);
    CHECK(q_scalar(UpdateRule::momentum(0.5), g) == doctest::Approx(0.25 * 1 + 0.5 * 2 - 1));
    CHECK(UpdateRule::sgd().memoryless());
    CHECK_FALSE(UpdateRule::adam(0.9, 0.999, 1e-8).memoryless());
}

TEST_CASE("streaming state equals full-history evaluation")
{
    Rng rng = make_rng(1, {});
    for (const UpdateRule& r : {UpdateRule::adam(0.9, 0.99, 1e-3), UpdateRule::momentum(0.8), UpdateRule::signsgd(0.1)}) {
        QState st(r, 3, 2);
        std::vector<ArrayXXd> hist;
        for (int t = 0; t < 6; ++t) {
            hist.push_back(normal_matrix(3, 2, rng).array());
            const ArrayXXd a = st.push(hist.back());
            const ArrayXXd b = q_eval(RuleTable(r), 1, hist);
            CHECK((a - b).abs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("weighted prefix sums")
{
    const UpdateRule r = UpdateRule::adam(0.9, 0.999, 1e-4);
    const std::vector<double> g{0.5, -0.4, 1.5};
    const std::vector<double> w{0.2, 1.0, -3.0};
    double expect = 0;
    for (size_t s = 0; s < g.size(); ++s)
        expect += w[s] * q_scalar(r, std::span<const double>(g.data(), s + 1));
    CHECK(q_weighted_prefix(r, g, w) == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("rule table overrides")
{
    RuleTable t(UpdateRule::sgd());
    t.overrides[2] = UpdateRule::signsgd(0.0);
    CHECK(t.at(1).kind == RuleKind::sgd);
    CHECK(t.at(2).kind == RuleKind::signsgd);
}

TEST_CASE("modifiers")
{
    Rng rng = make_rng(2, {});
    const ArrayXXd u = normal_matrix(8, 8, rng).array();
    const ArrayXXd w = normal_matrix(8, 8, rng).array();
    Modifiers m;
    CHECK(modifier_norm(u, w, m, 8, 1) == 1.0);

    m.clip = ClipMode::normalize;
    CHECK(modifier_norm(u, w, m, 8, 1) == doctest::Approx(std::sqrt(u.square().sum())));
    m.source = NormSource::weight;
    CHECK(modifier_norm(u, w, m, 8, 1) == doctest::Approx(std::sqrt(w.square().sum())));

    m.source = NormSource::update;
    m.clip = ClipMode::clip;
    m.theta0 = 1e30;
    Modifiers norm_only;
    norm_only.clip = ClipMode::normalize;
    const ArrayXXd plain = apply_modifiers(u, w, norm_only, 0.1, 0.5, 8, LayerKind::matrix_like);
    const ArrayXXd clipped = apply_modifiers(u, w, m, 0.1, 0.5, 8, LayerKind::matrix_like);
    CHECK((plain - clipped).abs().maxCoeff() == 0.0);

    m.theta0 = 1e-3;
    CHECK(modifier_norm(u, w, m, 8, 1) == doctest::Approx(1e-3 * 8));

    CHECK(modifier_norm(u, w, m, 8, 1) > 0);
    Modifiers z;
    z.clip = ClipMode::normalize;
    CHECK_THROWS_AS(modifier_norm(ArrayXXd::Zero(2, 2), w, z, 8, 1), Error);

    Modifiers bad;
    bad.lambda = 1.0;
    CHECK_THROWS(bad.check());
    CHECK(default_clip_exponent(LayerKind::vector_like) == 0.5);
    CHECK(default_clip_exponent(LayerKind::matrix_like) == 1.0);
}

TEST_CASE("normalized update norm grows like n")
{
    // entrywise Theta(1) matrix update: nu / n settles as n grows
    Modifiers m;
    m.clip = ClipMode::normalize;
    std::vector<double> ratio;
    for (Index n : {512, 4096}) {
        Rng rng = make_rng(3, {static_cast<std::uint64_t>(n)});
        const ArrayXXd u = normal_matrix(n, n, rng).array().sign();
        ratio.push_back(modifier_norm(u, u, m, static_cast<double>(n), 1) / n);
    }
    CHECK(std::abs(ratio[1] / ratio[0] - 1) < 0.05);
}
