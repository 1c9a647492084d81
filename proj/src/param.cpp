#include "tpl/param.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace tpl {

using nlohmann::json;

void AbcdParam::check() const
{
    if (L < 1)
        throw Error(ErrorCode::InvalidConfig, "L must be >= 1");
    const size_t n = static_cast<size_t>(L) + 1;
    auto field = [n](const std::vector<Rational>& v, const char* name) {
        if (v.size() != n)
            throw Error(ErrorCode::InvalidConfig, std::string("field '") + name + "' has " + std::to_string(v.size()) +
                                                      " entries, expected L+1 = " + std::to_string(n));
    };
    field(a, "a");
    field(b, "b");
    field(c, "c");
    field(d, "d");
    field(e, "e");
}

namespace {

json rats(const std::vector<Rational>& v)
{
    json j = json::array();
    for (const auto& x : v)
        j.push_back(x.str());
    return j;
}

std::vector<Rational> parse_rats(const json& j, const char* field)
{
    if (!j.is_array())
        throw Error(ErrorCode::InvalidConfig, std::string("field '") + field + "' must be an array");
    std::vector<Rational> out;
    for (size_t i = 0; i < j.size(); ++i) {
        const auto& x = j[i];
        try {
            if (x.is_string())
                out.push_back(Rational::parse(x.get<std::string>()));
            else if (x.is_number_integer())
                out.push_back(Rational(x.get<std::int64_t>()));
            else if (x.is_number())
                out.push_back(Rational::parse(x.dump()));
            else
                throw Error(ErrorCode::InvalidConfig, "not a number");
        } catch (const Error& e) {
            throw Error(ErrorCode::InvalidConfig,
                        std::string("field '") + field + "[" + std::to_string(i) + "]': " + e.what());
        }
    }
    return out;
}

std::string lower(std::string s)
{
    for (auto& ch : s)
        ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

// hidden value h, layer-1 value f, output value o
std::vector<Rational> row(int L, Rational first, Rational hidden, Rational out)
{
    std::vector<Rational> v(L + 1, hidden);
    v[0] = first;
    v[L] = out;
    return v;
}

const Rational half(1, 2);

} // namespace

json AbcdParam::to_json() const
{
    return {{"L", L}, {"name", name}, {"a", rats(a)}, {"b", rats(b)}, {"c", rats(c)}, {"d", rats(d)}, {"e", rats(e)}};
}

AbcdParam AbcdParam::from_json(const json& j)
{
    if (!j.is_object())
        throw Error(ErrorCode::InvalidConfig, "parametrization must be an object");
    AbcdParam p;
    if (!j.contains("a") || !j.contains("b") || !j.contains("c") || !j.contains("d"))
        throw Error(ErrorCode::InvalidConfig, "parametrization needs fields a, b, c, d");
    p.a = parse_rats(j.at("a"), "a");
    p.b = parse_rats(j.at("b"), "b");
    p.c = parse_rats(j.at("c"), "c");
    p.d = parse_rats(j.at("d"), "d");
    p.L = j.contains("L") ? j.at("L").get<int>() : static_cast<int>(p.a.size()) - 1;
    p.e = j.contains("e") ? parse_rats(j.at("e"), "e") : std::vector<Rational>(p.a.size(), Rational(0));
    p.name = j.value("name", std::string("custom"));
    p.check();
    return p;
}

std::vector<std::string> preset_names()
{
    return {"SP", "NTP", "muP", "NTP_clip", "muP_clip", "muP_clip_wnorm", "UP(s)"};
}

AbcdParam preset(const std::string& name, int L)
{
    if (L < 1)
        throw Error(ErrorCode::InvalidArgument, "L must be >= 1");
    const std::string k = lower(name);
    AbcdParam p;
    p.L = L;
    p.name = name;
    p.e.assign(L + 1, Rational(0));
    const Rational z(0), one(1);
    if (k == "sp") {
        p.a = row(L, z, z, z);
        p.b = row(L, z, half, half);
        p.c = row(L, z, z, z);
        p.d = row(L, z, z, z);
    } else if (k == "ntp") {
        p.a = row(L, z, half, half);
        p.b = row(L, z, z, z);
        p.c = row(L, half, one, half);
        p.d = row(L, half, one, half);
    } else if (k == "mup") {
        p.a = row(L, z, z, one);
        p.b = row(L, z, half, z);
        p.c = row(L, z, one, z);
        p.d = row(L, one, one, one);
    } else if (k == "ntp_clip") {
        p.a = row(L, z, half, half);
        p.b = row(L, z, z, z);
        p.c = row(L, z, z, z);
        p.d = row(L, half, one, half);
        p.e = row(L, half, one, half);
    } else if (k == "mup_clip") {
        p.a = row(L, z, z, one);
        p.b = row(L, z, half, z);
        p.c = row(L, -half, z, -half);
        p.d = row(L, one, one, one);
        p.e = row(L, half, one, half);
    } else if (k == "mup_clip_wnorm") {
        p.a = row(L, z, z, one);
        p.b = row(L, z, half, z);
        p.c = row(L, -half, half, -half);
        p.d = row(L, one, one, one);
        p.e = row(L, half, half, half);
    } else if (k.rfind("up", 0) == 0 && k.size() > 2) {
        std::string arg = k.substr(2);
        if (arg.front() == '(' && arg.back() == ')')
            arg = arg.substr(1, arg.size() - 2);
        else if (arg.front() == '_')
            arg = arg.substr(1);
        Rational s;
        try {
            s = Rational::parse(arg);
        } catch (const Error&) {
            throw Error(ErrorCode::UnknownPreset, "cannot parse UP exponent in '" + name + "'");
        }
        if (s < z || s > half)
            throw Error(ErrorCode::InvalidArgument, "UP(s) needs 0 <= s <= 1/2");
        p.a = row(L, z, s, one - s);
        p.b = row(L, z, half - s, z);
        p.c = row(L, s, one, s);
        p.d = row(L, one - s, one, one - s);
        p.name = "UP(" + s.str() + ")";
    } else {
        throw Error(ErrorCode::UnknownPreset, "unknown preset '" + name + "'");
    }
    return p;
}

Modifiers preset_modifiers(const std::string& name)
{
    Modifiers m;
    const std::string k = lower(name);
    if (k == "ntp_clip" || k == "mup_clip") {
        m.clip = ClipMode::normalize;
    } else if (k == "mup_clip_wnorm") {
        m.clip = ClipMode::normalize;
        m.source = NormSource::weight;
    }
    return m;
}

AbcdParam symmetry_shift(const AbcdParam& p, int layer, const Rational& theta)
{
    if (layer < 1 || layer > p.L + 1)
        throw Error(ErrorCode::InvalidArgument, "layer out of range");
    AbcdParam q = p;
    const int i = layer - 1;
    q.a[i] += theta;
    q.b[i] -= theta;
    q.c[i] -= theta;
    q.d[i] += theta;
    return q;
}

AbcdParam to_abc(const AbcdParam& p)
{
    AbcdParam q = p;
    for (int i = 0; i <= p.L; ++i) {
        q.c[i] = p.c[i] - p.d[i];
        q.d[i] = Rational(0);
    }
    return q;
}

RValues r_values(const AbcdParam& p)
{
    p.check();
    RValues r;
    for (int l = 1; l <= p.L + 1; ++l)
        r.r_l.push_back(p.C(l) + p.E(l) + p.A(l) - (l > 1 ? Rational(1) : Rational(0)));
    Rational m = r.r_l[0];
    for (int l = 1; l <= p.L; ++l) {
        m = min(m, r.r_l[l - 1]);
        r.r_le.push_back(m);
    }
    r.r = r.r_le.back();
    return r;
}

bool check_stability_init(const AbcdParam& p)
{
    p.check();
    if (p.A(1) + p.B(1) != Rational(0))
        return false;
    for (int l = 2; l <= p.L; ++l)
        if (p.A(l) + p.B(l) != half)
            return false;
    return p.A(p.L + 1) + p.B(p.L + 1) >= half;
}

bool check_faithful_init(const AbcdParam& p)
{
    p.check();
    const Rational out = p.A(p.L + 1) + p.B(p.L + 1);
    for (int l = 1; l <= p.L; ++l)
        if (p.D(l) != p.A(l) + out)
            return false;
    return p.D(p.L + 1) == p.A(p.L + 1);
}

bool check_training(const AbcdParam& p)
{
    const RValues r = r_values(p);
    for (const auto& x : r.r_l)
        if (x < Rational(0))
            return false;
    const int o = p.L + 1;
    if (p.A(o) + p.B(o) + r.r < Rational(1))
        return false;
    return p.B(o) <= p.C(o) + p.E(o);
}

bool check_nontrivial(const AbcdParam& p)
{
    const RValues r = r_values(p);
    const int o = p.L + 1;
    return p.A(o) + p.C(o) + p.E(o) == Rational(1) || p.A(o) + p.B(o) + r.r == Rational(1);
}

std::string to_string(Regime r)
{
    switch (r) {
    case Regime::unstable: return "unstable";
    case Regime::unfaithful: return "unfaithful";
    case Regime::trivial: return "trivial";
    case Regime::feature_learning: return "feature_learning";
    case Regime::operator_regime: return "operator_regime";
    }
    return "?";
}

Classification classify(const AbcdParam& p)
{
    Classification c;
    c.stable_init = check_stability_init(p);
    c.faithful_init = check_faithful_init(p);
    c.stable_faithful_training = check_training(p);
    c.nontrivial = check_nontrivial(p);
    c.r = r_values(p);
    if (!c.stable_init || !c.stable_faithful_training)
        c.regime = Regime::unstable;
    else if (!c.faithful_init)
        c.regime = Regime::unfaithful;
    else if (!c.nontrivial)
        c.regime = Regime::trivial;
    else
        c.regime = c.r.r == Rational(0) ? Regime::feature_learning : Regime::operator_regime;
    if (!c.faithful_init)
        c.notes.push_back("not faithful at initialization; with a scale-invariant update function this "
                          "parametrization may be equivalent to a faithful one");
    return c;
}

json Classification::to_json() const
{
    json j;
    j["stable_init"] = stable_init;
    j["faithful_init"] = faithful_init;
    j["stable_faithful_training"] = stable_faithful_training;
    j["nontrivial"] = nontrivial;
    j["r_l"] = rats(r.r_l);
    j["r"] = r.r.str();
    j["regime"] = to_string(regime);
    j["notes"] = notes;
    return j;
}

std::string classification_table(const AbcdParam& p, const Classification& c)
{
    std::ostringstream os;
    os << "layer      a      b      c      d      e      r_l\n";
    for (int l = 1; l <= p.L + 1; ++l) {
        std::string tag = l == p.L + 1 ? std::to_string(l) + " (out)" : std::to_string(l);
        os << tag;
        for (size_t k = tag.size(); k < 6; ++k)
            os << ' ';
        for (const Rational* v : {&p.A(l), &p.B(l), &p.C(l), &p.D(l), &p.E(l), &c.r.r_l[l - 1]}) {
            std::string s = v->str();
            os << ' ';
            for (size_t k = s.size(); k < 6; ++k)
                os << ' ';
            os << s;
        }
        os << '\n';
    }
    auto yn = [](bool b) { return b ? "true" : "false"; };
    os << "stable_init=" << yn(c.stable_init) << " faithful_init=" << yn(c.faithful_init)
       << " stable_faithful_training=" << yn(c.stable_faithful_training) << " nontrivial=" << yn(c.nontrivial) << '\n';
    os << "regime=" << to_string(c.regime) << " r=" << c.r.r.str() << '\n';
    for (const auto& n : c.notes)
        os << "note: " << n << '\n';
    return os.str();
}

} // namespace tpl
