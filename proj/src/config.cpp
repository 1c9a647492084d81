#include "tpl/config.hpp"

#include <fstream>
#include <sstream>

namespace tpl {

json rule_to_json(const UpdateRule& r)
{
    switch (r.kind) {
    case RuleKind::sgd:
        return {{"kind", "sgd"}};
    case RuleKind::momentum:
        return {{"kind", "momentum"}, {"beta", r.beta}};
    case RuleKind::signsgd:
        return {{"kind", "signsgd"}, {"eps", r.eps}};
    case RuleKind::adam:
        return {{"kind", "adam"}, {"beta1", r.beta1}, {"beta2", r.beta2}, {"eps", r.eps}};
    case RuleKind::custom:
        return {{"kind", "custom"}, {"id", r.custom_id}};
    }
    return {};
}

UpdateRule rule_from_json(const json& j, const std::string& where)
{
    std::string kind;
    json params = json::object();
    if (j.is_string()) {
        kind = j.get<std::string>();
    } else if (j.is_object() && j.contains("kind")) {
        kind = field<std::string>(j, "kind", "", where);
        params = j;
    } else {
        throw Error(ErrorCode::InvalidConfig, "'" + where + "' must be a rule name or an object with 'kind'");
    }
    UpdateRule r;
    if (kind == "sgd")
        r = UpdateRule::sgd();
    else if (kind == "momentum")
        r = UpdateRule::momentum(field<double>(params, "beta", 0.9, where));
    else if (kind == "signsgd")
        r = UpdateRule::signsgd(field<double>(params, "eps", 0.0, where));
    else if (kind == "adam")
        r = UpdateRule::adam(field<double>(params, "beta1", 0.9, where), field<double>(params, "beta2", 0.999, where),
                             field<double>(params, "eps", 1e-8, where));
    else
        throw Error(ErrorCode::InvalidConfig,
                    "'" + where + "': unknown rule '" + kind + "' (sgd, momentum, signsgd, adam)");
    try {
        r.check();
    } catch (const Error& e) {
        throw Error(ErrorCode::InvalidConfig, "'" + where + "': " + e.what());
    }
    return r;
}

json rule_table_to_json(const RuleTable& t)
{
    if (t.overrides.empty())
        return rule_to_json(t.base);
    json layers = json::object();
    for (const auto& [l, r] : t.overrides)
        layers[std::to_string(l)] = rule_to_json(r);
    return {{"base", rule_to_json(t.base)}, {"layers", layers}};
}

RuleTable rule_table_from_json(const json& j, const std::string& where)
{
    if (!j.is_object() || !j.contains("base"))
        return RuleTable(rule_from_json(j, where));
    RuleTable t(rule_from_json(j["base"], where + ".base"));
    if (j.contains("layers")) {
        if (!j["layers"].is_object())
            throw Error(ErrorCode::InvalidConfig, "'" + where + ".layers' must be an object");
        for (const auto& [k, v] : j["layers"].items()) {
            int l = 0;
            try {
                l = std::stoi(k);
            } catch (const std::exception&) {
                l = 0;
            }
            if (l < 1)
                throw Error(ErrorCode::InvalidConfig, "'" + where + ".layers': bad layer key '" + k + "'");
            t.overrides[l] = rule_from_json(v, where + ".layers." + k);
        }
    }
    return t;
}

json modifiers_to_json(const Modifiers& m)
{
    return {{"weight_decay", m.lambda},
            {"clip", to_string(m.clip)},
            {"theta0", m.theta0},
            {"norm_source", to_string(m.source)}};
}

Modifiers modifiers_from_json(const json& j, const std::string& where)
{
    if (!j.is_object())
        throw Error(ErrorCode::InvalidConfig, "'" + where + "' must be an object");
    Modifiers m;
    try {
        m.lambda = field<double>(j, "weight_decay", 0.0, where);
        m.clip = clip_mode_from(field<std::string>(j, "clip", "none", where));
        m.theta0 = field<double>(j, "theta0", 1.0, where);
        m.source = norm_source_from(field<std::string>(j, "norm_source", "update", where));
        m.check();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidConfig)
            throw;
        throw Error(ErrorCode::InvalidConfig, "'" + where + "': " + e.what());
    }
    return m;
}

namespace {

const char* const kWorkflows[] = {"program", "classify", "nt", "mu", "train", "sweep", "ketcheck"};

void line_col(const std::string& text, std::size_t offset, int& line, int& col)
{
    line = 1;
    col = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < offset; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
}

} // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        int line = 0, col = 0;
        line_col(text, e.byte, line, col);
        std::string msg = e.what();
        throw Error(ErrorCode::InvalidConfig,
                    source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
    }
    if (!j.is_object())
        throw Error(ErrorCode::InvalidConfig, source + ": top level must be an object");
    ExperimentConfig c;
    c.schema = field<int>(j, "schema", kConfigSchema, "config");
    if (c.schema != kConfigSchema)
        throw Error(ErrorCode::InvalidConfig, source + ": unsupported schema " + std::to_string(c.schema) +
                                                  " (expected " + std::to_string(kConfigSchema) + ")");
    c.seed = field<std::uint64_t>(j, "seed", 0, "config");
    c.out = field<std::string>(j, "out", "", "config");
    for (const auto& [k, v] : j.items()) {
        if (k == "schema" || k == "seed" || k == "out" || k == "description")
            continue;
        bool known = false;
        for (const char* w : kWorkflows)
            known |= k == w;
        if (!known)
            throw Error(ErrorCode::InvalidConfig, source + ": unknown key '" + k + "'");
        if (!c.workflow.empty())
            throw Error(ErrorCode::InvalidConfig,
                        source + ": more than one workflow section ('" + c.workflow + "' and '" + k + "')");
        c.workflow = k;
        c.section = v;
    }
    if (c.workflow.empty())
        throw Error(ErrorCode::InvalidConfig, source + ": no workflow section");
    if (!c.section.is_object())
        throw Error(ErrorCode::InvalidConfig, source + ": section '" + c.workflow + "' must be an object");
    return c;
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw Error(ErrorCode::Io, "cannot read '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), path);
}

} // namespace tpl
