#include <doctest.h>

#include "tpl/param.hpp"

using namespace tpl;

TEST_CASE("rational arithmetic is exact")
{
    CHECK(Rational(1, 2) + Rational(1, 3) == Rational(5, 6));
    CHECK(Rational(2, -4) == Rational(-1, 2));
    CHECK(Rational::parse("3/6") == Rational(1, 2));
    CHECK(Rational::parse("-2") == Rational(-2));
    CHECK(Rational(1, 4) < Rational(1, 3));
    CHECK(min(Rational(1, 4), Rational(-1)) == Rational(-1));
    CHECK_THROWS(Rational(1, 0));
}

TEST_CASE("preset truth table")
{
    for (int L : {1, 2, 3, 5}) {
        const auto sp = classify(preset("SP", L));
        CHECK(sp.stable_init);
        CHECK_FALSE(sp.faithful_init);

        const auto ntp = classify(preset("NTP", L));
        CHECK(ntp.stable_init);
        CHECK(ntp.faithful_init);
        CHECK(ntp.stable_faithful_training);
        CHECK(ntp.nontrivial);
        CHECK(ntp.regime == Regime::operator_regime);
        CHECK(ntp.r.r == Rational(1, 2));

        const auto mup = classify(preset("muP", L));
        CHECK(mup.regime == Regime::feature_learning);
        CHECK(mup.r.r == Rational(0));

        const auto up = classify(preset("UP(1/4)", L));
        CHECK(up.regime == Regime::operator_regime);
        CHECK(up.r.r == Rational(1, 4));
    }
}

TEST_CASE("clip presets classify under the shifted r")
{
    for (const char* name : {"NTP_clip", "muP_clip", "muP_clip_wnorm"}) {
        const auto c = classify(preset(name, 3));
        CHECK(c.stable_init);
        CHECK(c.faithful_init);
        CHECK(c.stable_faithful_training);
        CHECK(c.nontrivial);
    }
    CHECK(classify(preset("muP_clip", 3)).r.r == Rational(0));
    CHECK(classify(preset("NTP_clip", 3)).regime == Regime::operator_regime);
}

TEST_CASE("UP(s) interpolates between muP and NTP")
{
    CHECK(classify(preset("UP(0)", 2)).regime == Regime::feature_learning);
    CHECK(classify(preset("UP(1/2)", 2)).r.r == Rational(1, 2));
    CHECK(classify(preset("UP(1/3)", 4)).r.r == Rational(1, 3));
}

TEST_CASE("r values follow the layerwise formula")
{
    // r_1 = a+c, r_l = a+c-1 for l > 1, computed by hand for muP with L = 2
    const AbcdParam p = preset("muP", 2);
    const RValues r = r_values(p);
    for (int l = 1; l <= 3; ++l) {
        const Rational expect = p.A(l) + p.C(l) - (l > 1 ? Rational(1) : Rational(0));
        CHECK(r.r_l[l - 1] == expect);
    }
}

TEST_CASE("symmetry shift leaves the classification unchanged")
{
    const AbcdParam p = preset("NTP", 3);
    const std::string base = classify(p).to_json().dump();
    for (int l = 1; l <= 4; ++l)
        for (const Rational th : {Rational(1, 2), Rational(-1, 3), Rational(2)})
            CHECK(classify(symmetry_shift(p, l, th)).to_json().dump() == base);
    CHECK_THROWS(symmetry_shift(p, 0, Rational(1)));
}

TEST_CASE("shifted muP reduces to the classical abc table")
{
    const int L = 3;
    AbcdParam p = preset("muP", L);
    p = symmetry_shift(p, 1, Rational(-1, 2));
    p = symmetry_shift(p, L + 1, Rational(-1, 2));
    const AbcdParam q = to_abc(p);
    const Rational h(1, 2);
    CHECK(q.A(1) == -h);
    CHECK(q.A(2) == Rational(0));
    CHECK(q.A(L + 1) == h);
    for (int l = 1; l <= L + 1; ++l) {
        CHECK(q.B(l) == h);
        CHECK(q.C(l) == Rational(0));
        CHECK(q.D(l) == Rational(0));
    }
}

TEST_CASE("parametrization json")
{
    const AbcdParam p = preset("muP", 2);
    const AbcdParam q = AbcdParam::from_json(p.to_json());
    CHECK(q.to_json() == p.to_json());
    nlohmann::json bad = p.to_json();
    bad["b"].erase(0);
    CHECK_THROWS_AS(AbcdParam::from_json(bad), Error);
    CHECK_THROWS_AS(preset("XP", 2), Error);
}
