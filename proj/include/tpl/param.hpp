#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "tpl/optim.hpp"
#include "tpl/rational.hpp"

namespace tpl {

// Per-layer exponents; vectors are indexed by layer-1 (layer L+1 is the output).
struct AbcdParam {
    int L = 1;
    std::vector<Rational> a, b, c, d;
    std::vector<Rational> e; // clipping/normalization exponents, 0 without
    std::string name;

    // 1-based accessors
    const Rational& A(int l) const { return a.at(l - 1); }
    const Rational& B(int l) const { return b.at(l - 1); }
    const Rational& C(int l) const { return c.at(l - 1); }
    const Rational& D(int l) const { return d.at(l - 1); }
    const Rational& E(int l) const { return e.at(l - 1); }

    void check() const; // lengths == L+1, throws InvalidConfig
    nlohmann::json to_json() const;
    static AbcdParam from_json(const nlohmann::json& j);
};

// SP, NTP, muP, NTP_clip, muP_clip, muP_clip_wnorm, UP(s). Throws UnknownPreset.
AbcdParam preset(const std::string& name, int L);
std::vector<std::string> preset_names();

// The update modifiers a preset is meant to be trained with (clip presets normalize).
Modifiers preset_modifiers(const std::string& name);

AbcdParam symmetry_shift(const AbcdParam& p, int layer, const Rational& theta);
AbcdParam to_abc(const AbcdParam& p);

struct RValues {
    std::vector<Rational> r_l; // r_1..r_{L+1}
    std::vector<Rational> r_le; // r_{<=1}..r_{<=L}
    Rational r;
};

RValues r_values(const AbcdParam& p);

bool check_stability_init(const AbcdParam& p);
bool check_faithful_init(const AbcdParam& p);
bool check_training(const AbcdParam& p);
bool check_nontrivial(const AbcdParam& p);

enum class Regime { unstable, unfaithful, trivial, feature_learning, operator_regime };
std::string to_string(Regime r);

struct Classification {
    bool stable_init = false;
    bool faithful_init = false;
    bool stable_faithful_training = false;
    bool nontrivial = false;
    RValues r;
    Regime regime = Regime::unstable;
    std::vector<std::string> notes;

    nlohmann::json to_json() const;
};

Classification classify(const AbcdParam& p);

// Human-readable table: per-layer exponents and r_l, then the verdicts.
std::string classification_table(const AbcdParam& p, const Classification& c);

} // namespace tpl
