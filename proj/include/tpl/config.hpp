#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "tpl/optim.hpp"

namespace tpl {

using nlohmann::json;

// Rule spec: "sgd" | "signsgd" | "adam" | "momentum", or an object {"kind": ..., params}.
json rule_to_json(const UpdateRule& r);
UpdateRule rule_from_json(const json& j, const std::string& where);
// A rule spec, or {"base": spec, "layers": {"1": spec, ...}}.
json rule_table_to_json(const RuleTable& t);
RuleTable rule_table_from_json(const json& j, const std::string& where);

// {"weight_decay", "clip": none|normalize|clip, "theta0", "norm_source": update|weight}
json modifiers_to_json(const Modifiers& m);
Modifiers modifiers_from_json(const json& j, const std::string& where);

constexpr int kConfigSchema = 1;

// One workflow section out of: program, classify, nt, mu, train, sweep, ketcheck.
struct ExperimentConfig {
    int schema = kConfigSchema;
    std::string workflow;
    json section = json::object();
    std::uint64_t seed = 0;
    std::string out;
};

// Parse errors carry line and column; field errors carry the dotted field path.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

// Typed field access with InvalidConfig diagnostics naming `where.key`.
template <class T>
T field(const json& j, const std::string& key, const T& fallback, const std::string& where)
{
    if (!j.is_object() || !j.contains(key))
        return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, "field '" + where + "." + key + "': " + e.what());
    }
}

} // namespace tpl
