#include "tpl/ir.hpp"

#include <set>
#include <unordered_map>
#include <unordered_set>

namespace tpl {

std::string grad_name(const std::string& target, const std::string& z) { return "d[" + target + "]" + z; }

std::string copy_name(const std::string& base, int copy) { return base + "@" + std::to_string(copy); }

namespace {

std::string part_name(const std::string& target, const std::string& tag, const std::string& z)
{
    return "d[" + target + "|" + tag + "]" + z;
}

} // namespace

ProgramIR backprop_transform(const ProgramIR& p, const std::string& target)
{
    std::unordered_map<std::string, int> def; // computed symbols -> instruction index
    for (size_t k = 0; k < p.instructions.size(); ++k)
        def[defined_symbol(p.instructions[k])] = static_cast<int>(k);
    std::unordered_set<std::string> initial_vectors(p.vectors.begin(), p.vectors.end());

    const bool target_computed = def.count(target) > 0;
    if (!target_computed && !initial_vectors.count(target)) {
        bool is_symbol = false;
        for (const auto& m : p.matrices)
            is_symbol |= m == target;
        for (const auto& s : p.scalars)
            is_symbol |= s.name == target;
        if (is_symbol)
            throw Error(ErrorCode::NotAVector, "target '" + target + "' is not a vector");
        throw Error(ErrorCode::UndefinedSymbol, "target '" + target + "' is not defined");
    }
    if (target_computed && std::holds_alternative<Avg>(p.instructions[def[target]]))
        throw Error(ErrorCode::NotAVector, "target '" + target + "' is a scalar");

    // dependency cone
    std::unordered_set<std::string> cone{target};
    const int last = target_computed ? def[target] : -1;
    for (int k = last; k >= 0; --k) {
        const auto& ins = p.instructions[k];
        if (!cone.count(defined_symbol(ins)))
            continue;
        if (auto a = std::get_if<Avg>(&ins)) {
            cone.insert(a->src);
        } else if (auto m = std::get_if<MatMul>(&ins)) {
            cone.insert(m->src);
        } else {
            const auto& o = std::get<OuterNonlin>(ins);
            for (const auto& b : o.blocks)
                cone.insert(b.begin(), b.end());
            for (const auto& s : o.scalars)
                if (def.count(s))
                    cone.insert(s);
        }
    }

    ProgramIR q = p;
    auto emit = [&q](Instruction ins) { q.instructions.push_back(std::move(ins)); };

    std::unordered_map<std::string, std::vector<std::string>> contrib; // vector or scalar contributions
    emit(OuterNonlin{{{}}, {}, fns::constant(1.0, {0}, 0), grad_name(target, target)});

    auto finalize_vector = [&](const std::string& z) {
        const auto& c = contrib[z];
        if (c.empty())
            emit(OuterNonlin{{{}}, {}, fns::constant(0.0, {0}, 0), grad_name(target, z)});
        else
            emit(OuterNonlin{{c}, {}, fns::sum({static_cast<int>(c.size())}), grad_name(target, z)});
    };

    for (int k = last; k >= 0; --k) {
        const auto& ins = p.instructions[k];
        const std::string& s = defined_symbol(ins);
        if (!cone.count(s))
            continue;
        const std::string ks = std::to_string(k);
        if (auto a = std::get_if<Avg>(&ins)) {
            // d^{x|c} z = (d^x c) 1_n
            const auto& c = contrib[s];
            const std::string name = part_name(target, ks, a->src);
            if (c.empty())
                emit(OuterNonlin{{{}}, {}, fns::constant(0.0, {0}, 0), name});
            else
                emit(OuterNonlin{{{}}, c, fns::broadcast(static_cast<int>(c.size())), name});
            contrib[a->src].push_back(name);
            continue;
        }
        if (s != target)
            finalize_vector(s);
        const std::string dz = grad_name(target, s);
        if (auto m = std::get_if<MatMul>(&ins)) {
            const std::string name = part_name(target, ks, m->src);
            emit(MatMul{m->matrix, !m->transpose, dz, name});
            contrib[m->src].push_back(name);
            continue;
        }
        const auto& o = std::get<OuterNonlin>(ins);
        const int r1 = o.order();
        if (!o.fn.has_partials())
            throw Error(ErrorCode::MissingPartial, "instruction " + ks + ": function '" + o.fn.id + "' lacks partials");
        for (int i = 0; i < r1; ++i) {
            for (size_t pos = 0; pos < o.blocks[i].size(); ++pos) {
                const std::string& v = o.blocks[i][pos];
                if (!cone.count(v))
                    continue;
                std::vector<std::vector<std::string>> blocks;
                std::vector<std::string> b0 = o.blocks[0];
                b0.push_back(dz);
                if (i == 0) {
                    blocks.push_back(b0);
                    for (int b = 1; b < r1; ++b)
                        blocks.push_back(o.blocks[b]);
                } else {
                    blocks.push_back(o.blocks[i]);
                    blocks.push_back(b0);
                    for (int b = 1; b < r1; ++b)
                        if (b != i)
                            blocks.push_back(o.blocks[b]);
                }
                std::vector<int> sizes;
                for (const auto& b : blocks)
                    sizes.push_back(static_cast<int>(b.size()));
                json params{{"base", o.fn.to_json()}, {"slot", i}, {"comp", static_cast<int>(pos)}};
                FunctionRef fn = make_function("bp_partial", params, sizes, o.fn.scalars);
                const std::string name = part_name(target, ks + "." + std::to_string(i) + "." + std::to_string(pos), v);
                emit(OuterNonlin{blocks, o.scalars, fn, name});
                contrib[v].push_back(name);
            }
        }
        for (size_t pos = 0; pos < o.scalars.size(); ++pos) {
            const std::string& c = o.scalars[pos];
            if (!def.count(c) || !cone.count(c))
                continue;
            if (!o.fn.has_scalar_partials())
                throw Error(ErrorCode::MissingPartial,
                            "instruction " + ks + ": function '" + o.fn.id + "' lacks scalar partials");
            std::vector<std::vector<std::string>> blocks = o.blocks;
            blocks[0].push_back(dz);
            std::vector<int> sizes;
            for (const auto& b : blocks)
                sizes.push_back(static_cast<int>(b.size()));
            json params{{"base", o.fn.to_json()}, {"comp", static_cast<int>(pos)}};
            FunctionRef fn = make_function("bp_scalar", params, sizes, o.fn.scalars);
            const std::string tag = ks + ".s." + std::to_string(pos);
            const std::string vec = part_name(target, tag, c + "#v");
            const std::string sc = part_name(target, tag, c);
            emit(OuterNonlin{blocks, o.scalars, fn, vec});
            emit(Avg{vec, sc});
            contrib[c].push_back(sc);
        }
    }
    for (const auto& v : p.vectors)
        if (cone.count(v) && v != target)
            finalize_vector(v);
    return q;
}

TotalProgram total_program(const ProgramIR& p, const std::vector<std::string>& outputs,
                           const std::vector<std::map<std::string, double>>& inputs)
{
    if (outputs.empty())
        throw Error(ErrorCode::EmptyOutputs, "total program needs at least one output");
    if (inputs.empty())
        throw Error(ErrorCode::InvalidArgument, "total program needs at least one input binding");

    ProgramIR full = p;
    for (const auto& o : outputs) {
        ProgramIR bp = backprop_transform(p, o);
        full.instructions.insert(full.instructions.end(), bp.instructions.begin() + p.instructions.size(),
                                 bp.instructions.end());
    }

    std::set<std::string> bound;
    for (const auto& in : inputs)
        for (const auto& [k, _] : in)
            bound.insert(k);
    for (const auto& k : bound) {
        bool found = false;
        for (const auto& s : p.scalars)
            found |= s.name == k;
        if (!found)
            throw Error(ErrorCode::UndefinedSymbol, "input binding '" + k + "' is not an initial scalar");
    }

    TotalProgram tp;
    ProgramIR& q = tp.program;
    q.matrices = p.matrices;
    q.vectors = p.vectors;
    for (const auto& s : p.scalars)
        if (!bound.count(s.name))
            q.scalars.push_back(s);

    const int N = static_cast<int>(inputs.size());
    for (int a = 0; a < N; ++a) {
        std::unordered_map<std::string, std::string> ren;
        for (const auto& s : p.scalars) {
            if (!bound.count(s.name))
                continue;
            auto it = inputs[a].find(s.name);
            const std::string nm = copy_name(s.name, a);
            q.scalars.push_back({nm, it == inputs[a].end() ? s.limit : it->second});
            ren[s.name] = nm;
            tp.groups[s.name].push_back(nm);
        }
        for (const auto& ins : full.instructions) {
            const std::string& s = defined_symbol(ins);
            ren[s] = copy_name(s, a);
            tp.groups[s].push_back(ren[s]);
        }
        auto r = [&ren](const std::string& s) {
            auto it = ren.find(s);
            return it == ren.end() ? s : it->second;
        };
        for (const auto& ins : full.instructions) {
            if (auto x = std::get_if<Avg>(&ins)) {
                q.instructions.push_back(Avg{r(x->src), r(x->dst)});
            } else if (auto m = std::get_if<MatMul>(&ins)) {
                q.instructions.push_back(MatMul{m->matrix, m->transpose, r(m->src), r(m->dst)});
            } else {
                OuterNonlin o = std::get<OuterNonlin>(ins);
                for (auto& b : o.blocks)
                    for (auto& v : b)
                        v = r(v);
                for (auto& c : o.scalars)
                    c = r(c);
                o.dst = r(o.dst);
                q.instructions.push_back(std::move(o));
            }
        }
        for (const auto& o : outputs)
            q.outputs.push_back(r(o));
    }
    return tp;
}

} // namespace tpl
