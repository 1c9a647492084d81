#include "tpl/ir.hpp"

#include <set>
#include <unordered_map>

namespace tpl {

const std::string& defined_symbol(const Instruction& ins)
{
    return std::visit([](const auto& i) -> const std::string& { return i.dst; }, ins);
}

namespace {

enum class Kind { matrix, vector, scalar };

const char* kind_name(Kind k)
{
    switch (k) {
    case Kind::matrix: return "matrix";
    case Kind::vector: return "vector";
    case Kind::scalar: return "scalar";
    }
    return "?";
}

struct Checker {
    std::unordered_map<std::string, Kind> kinds;
    std::vector<Diagnostic> diags;

    void add(int idx, const std::string& code, const std::string& msg) { diags.push_back({idx, code, msg}); }

    void define(int idx, const std::string& name, Kind k)
    {
        if (name.empty()) {
            add(idx, "DuplicateSymbol", "empty symbol name");
            return;
        }
        if (!kinds.emplace(name, k).second)
            add(idx, "DuplicateSymbol", "symbol '" + name + "' defined twice");
    }

    void use(int idx, const std::string& name, Kind k)
    {
        auto it = kinds.find(name);
        if (it == kinds.end())
            add(idx, "UndefinedSymbol", "symbol '" + name + "' is not defined before use");
        else if (it->second != k)
            add(idx, "KindMismatch",
                "symbol '" + name + "' is a " + kind_name(it->second) + ", expected " + kind_name(k));
    }
};

} // namespace

std::vector<Diagnostic> validate(const ProgramIR& p, bool require_partials)
{
    Checker c;
    for (const auto& m : p.matrices)
        c.define(-1, m, Kind::matrix);
    for (const auto& v : p.vectors)
        c.define(-1, v, Kind::vector);
    for (const auto& s : p.scalars)
        c.define(-1, s.name, Kind::scalar);

    for (size_t k = 0; k < p.instructions.size(); ++k) {
        const int idx = static_cast<int>(k);
        const auto& ins = p.instructions[k];
        if (auto a = std::get_if<Avg>(&ins)) {
            c.use(idx, a->src, Kind::vector);
            c.define(idx, a->dst, Kind::scalar);
        } else if (auto m = std::get_if<MatMul>(&ins)) {
            c.use(idx, m->matrix, Kind::matrix);
            c.use(idx, m->src, Kind::vector);
            c.define(idx, m->dst, Kind::vector);
        } else if (auto o = std::get_if<OuterNonlin>(&ins)) {
            for (const auto& b : o->blocks)
                for (const auto& v : b)
                    c.use(idx, v, Kind::vector);
            for (const auto& s : o->scalars)
                c.use(idx, s, Kind::scalar);
            const auto& fn = o->fn;
            if (o->blocks.empty())
                c.add(idx, "ArityMismatch", "OuterNonlin needs at least one block");
            if (fn.order() != o->order())
                c.add(idx, "ArityMismatch",
                      "function '" + fn.id + "' has " + std::to_string(fn.order()) + " blocks, instruction has " +
                          std::to_string(o->order()));
            else
                for (int b = 0; b < o->order(); ++b)
                    if (fn.blocks[b] != static_cast<int>(o->blocks[b].size()))
                        c.add(idx, "ArityMismatch",
                              "block " + std::to_string(b) + " of '" + fn.id + "' takes " +
                                  std::to_string(fn.blocks[b]) + " vectors, got " +
                                  std::to_string(o->blocks[b].size()));
            if (fn.scalars != static_cast<int>(o->scalars.size()))
                c.add(idx, "ArityMismatch",
                      "function '" + fn.id + "' takes " + std::to_string(fn.scalars) + " scalars, got " +
                          std::to_string(o->scalars.size()));
            if (!fn.eval)
                c.add(idx, "MissingFunction", "function '" + fn.id + "' has no evaluator");
            if (require_partials && !fn.has_partials())
                c.add(idx, "MissingPartial", "function '" + fn.id + "' lacks vector partials");
            c.define(idx, o->dst, Kind::vector);
        }
    }
    for (const auto& out : p.outputs)
        c.use(-1, out, Kind::vector);
    return c.diags;
}

namespace {

ErrorCode code_of(const std::string& s)
{
    if (s == "UndefinedSymbol") return ErrorCode::UndefinedSymbol;
    if (s == "DuplicateSymbol") return ErrorCode::DuplicateSymbol;
    if (s == "KindMismatch") return ErrorCode::KindMismatch;
    if (s == "MissingPartial") return ErrorCode::MissingPartial;
    return ErrorCode::ArityMismatch;
}

void throw_first(const std::vector<Diagnostic>& d)
{
    if (d.empty())
        return;
    std::string where = d[0].index >= 0 ? "instruction " + std::to_string(d[0].index) + ": " : "";
    throw Error(code_of(d[0].code), where + d[0].message);
}

} // namespace

json program_to_json(const ProgramIR& p)
{
    json j;
    j["schema"] = "tpl-program/1";
    j["matrices"] = p.matrices;
    j["vectors"] = p.vectors;
    j["scalars"] = json::array();
    for (const auto& s : p.scalars)
        j["scalars"].push_back({{"name", s.name}, {"limit", s.limit}});
    j["instructions"] = json::array();
    for (const auto& ins : p.instructions) {
        json i;
        if (auto a = std::get_if<Avg>(&ins)) {
            i = {{"op", "avg"}, {"src", a->src}, {"dst", a->dst}};
        } else if (auto m = std::get_if<MatMul>(&ins)) {
            i = {{"op", "matmul"}, {"matrix", m->matrix}, {"transpose", m->transpose}, {"src", m->src}, {"dst", m->dst}};
        } else {
            const auto& o = std::get<OuterNonlin>(ins);
            i = {{"op", "outer"}, {"blocks", o.blocks}, {"scalars", o.scalars}, {"dst", o.dst}};
            i["fn"] = {{"id", o.fn.id}, {"params", o.fn.params}};
        }
        j["instructions"].push_back(i);
    }
    j["outputs"] = p.outputs;
    return j;
}

ProgramIR program_from_json(const json& j)
{
    ProgramIR p;
    try {
        p.matrices = j.value("matrices", std::vector<std::string>{});
        p.vectors = j.value("vectors", std::vector<std::string>{});
        for (const auto& s : j.value("scalars", json::array())) {
            if (s.is_string())
                p.scalars.push_back({s.get<std::string>(), 0.0});
            else
                p.scalars.push_back({s.at("name").get<std::string>(), s.value("limit", 0.0)});
        }
        int k = 0;
        for (const auto& i : j.at("instructions")) {
            const std::string op = i.at("op").get<std::string>();
            if (op == "avg") {
                p.instructions.push_back(Avg{i.at("src"), i.at("dst")});
            } else if (op == "matmul") {
                p.instructions.push_back(MatMul{i.at("matrix"), i.value("transpose", false), i.at("src"), i.at("dst")});
            } else if (op == "outer") {
                OuterNonlin o;
                o.blocks = i.at("blocks").get<std::vector<std::vector<std::string>>>();
                o.scalars = i.value("scalars", std::vector<std::string>{});
                o.dst = i.at("dst").get<std::string>();
                std::vector<int> sizes;
                for (const auto& b : o.blocks)
                    sizes.push_back(static_cast<int>(b.size()));
                const auto& f = i.at("fn");
                o.fn = make_function(f.at("id").get<std::string>(), f.value("params", json::object()), sizes,
                                     static_cast<int>(o.scalars.size()));
                p.instructions.push_back(std::move(o));
            } else {
                throw Error(ErrorCode::InvalidConfig, "instruction " + std::to_string(k) + ": unknown op '" + op + "'");
            }
            ++k;
        }
        p.outputs = j.value("outputs", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("malformed program: ") + e.what());
    }
    throw_first(validate(p));
    return p;
}

ProgramBuilder& ProgramBuilder::matrix(const std::string& name)
{
    p_.matrices.push_back(name);
    return *this;
}
ProgramBuilder& ProgramBuilder::vector(const std::string& name)
{
    p_.vectors.push_back(name);
    return *this;
}
ProgramBuilder& ProgramBuilder::scalar(const std::string& name, double limit)
{
    p_.scalars.push_back({name, limit});
    return *this;
}
ProgramBuilder& ProgramBuilder::avg(const std::string& src, const std::string& dst)
{
    p_.instructions.push_back(Avg{src, dst});
    return *this;
}
ProgramBuilder& ProgramBuilder::matmul(const std::string& m, const std::string& src, const std::string& dst,
                                       bool transpose)
{
    p_.instructions.push_back(MatMul{m, transpose, src, dst});
    return *this;
}
ProgramBuilder& ProgramBuilder::outer(const FunctionRef& fn, std::vector<std::vector<std::string>> blocks,
                                      std::vector<std::string> scalars, const std::string& dst)
{
    p_.instructions.push_back(OuterNonlin{std::move(blocks), std::move(scalars), fn, dst});
    return *this;
}
ProgramBuilder& ProgramBuilder::output(const std::string& name)
{
    p_.outputs.push_back(name);
    return *this;
}
ProgramIR ProgramBuilder::build() const
{
    throw_first(validate(p_));
    return p_;
}

ProgramIR build_program(const json& spec)
{
    if (spec.contains("mlp")) {
        const auto& m = spec.at("mlp");
        return build_mlp_program(m.at("L").get<int>(), m.value("d", 1), m.value("activation", std::string("srelu")),
                                 m.value("xi", std::vector<double>{}));
    }
    return program_from_json(spec);
}

ProgramIR build_mlp_program(int L, int d, const std::string& activation, const std::vector<double>& xi,
                            MlpProgramNames* names)
{
    if (L < 1 || d < 1)
        throw Error(ErrorCode::InvalidArgument, "MLP needs L>=1 and d>=1");
    if (!xi.empty() && static_cast<int>(xi.size()) != d)
        throw Error(ErrorCode::DimensionMismatch, "xi has wrong length");
    ProgramBuilder b;
    MlpProgramNames nm;
    for (int j = 1; j <= d; ++j) {
        nm.first_layer.push_back("w1_" + std::to_string(j));
        nm.input_scalars.push_back("xi_" + std::to_string(j));
        b.vector(nm.first_layer.back());
    }
    b.vector("v");
    for (int l = 2; l <= L; ++l) {
        nm.hidden_matrices.push_back("W" + std::to_string(l));
        b.matrix(nm.hidden_matrices.back());
    }
    for (int j = 0; j < d; ++j)
        b.scalar(nm.input_scalars[j], xi.empty() ? 0.0 : xi[j]);
    b.outer(fns::lincomb(d), {nm.first_layer}, nm.input_scalars, "h1");
    b.outer(fns::act(activation), {{"h1"}}, {}, "x1");
    for (int l = 2; l <= L; ++l) {
        const std::string h = "h" + std::to_string(l);
        b.matmul("W" + std::to_string(l), "x" + std::to_string(l - 1), h);
        b.outer(fns::act(activation), {{h}}, {}, "x" + std::to_string(l));
    }
    b.outer(fns::product({2}), {{"v", "x" + std::to_string(L)}}, {}, "y");
    b.output("y");
    if (names)
        *names = nm;
    return b.build();
}

} // namespace tpl
