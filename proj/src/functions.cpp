#include "tpl/activation.hpp"
#include "tpl/ir.hpp"

#include <numeric>

namespace tpl {

int FunctionRef::vector_args() const { return std::accumulate(blocks.begin(), blocks.end(), 0); }

json FunctionRef::to_json() const
{
    json j;
    j["id"] = id;
    j["params"] = params;
    j["blocks"] = blocks;
    j["scalars"] = scalars;
    return j;
}

namespace {

void require(bool ok, const std::string& what)
{
    if (!ok)
        throw Error(ErrorCode::ArityMismatch, what);
}

int total(const std::vector<int>& b) { return std::accumulate(b.begin(), b.end(), 0); }

FunctionRef base_ref(const std::string& id, const json& params, const std::vector<int>& blocks, int scalars)
{
    FunctionRef f;
    f.id = id;
    f.params = params.is_null() ? json::object() : params;
    f.blocks = blocks;
    f.scalars = scalars;
    return f;
}

FunctionRef make_bp_partial(const json& params, const std::vector<int>& blocks, int scalars)
{
    auto base = std::make_shared<FunctionRef>(function_from_json(params.at("base")));
    const int slot = params.at("slot").get<int>();
    const int comp = params.at("comp").get<int>();
    const int r1 = base->order();
    require(slot >= 0 && slot < r1, "bp_partial: slot out of range");
    require(comp >= 0 && comp < base->blocks[slot], "bp_partial: component out of range");
    require(base->has_partials(), "bp_partial: base function '" + base->id + "' has no partials");

    std::vector<int> expect;
    if (slot == 0) {
        expect = base->blocks;
        expect[0] += 1;
    } else {
        expect.push_back(base->blocks[slot]);
        expect.push_back(base->blocks[0] + 1);
        for (int b = 1; b < r1; ++b)
            if (b != slot)
                expect.push_back(base->blocks[b]);
    }
    require(blocks == expect, "bp_partial: block layout does not match base");
    require(scalars == base->scalars, "bp_partial: scalar count does not match base");

    // offsets of base blocks in the base flat layout
    std::vector<int> off(r1 + 1, 0);
    for (int b = 0; b < r1; ++b)
        off[b + 1] = off[b] + base->blocks[b];
    const int nv = off[r1];
    const int pidx = off[slot] + comp;

    // map: derived flat index -> base flat index (-1 for dy)
    std::vector<int> map;
    if (slot == 0) {
        for (int i = 0; i < base->blocks[0]; ++i)
            map.push_back(i);
        map.push_back(-1);
        for (int i = off[1]; i < nv; ++i)
            map.push_back(i);
    } else {
        for (int i = 0; i < base->blocks[slot]; ++i)
            map.push_back(off[slot] + i);
        for (int i = 0; i < base->blocks[0]; ++i)
            map.push_back(i);
        map.push_back(-1);
        for (int b = 1; b < r1; ++b)
            if (b != slot)
                for (int i = 0; i < base->blocks[b]; ++i)
                    map.push_back(off[b] + i);
    }

    FunctionRef f = base_ref("bp_partial", params, blocks, scalars);
    f.eval = [base, map, pidx, nv](const double* v, const double* c) {
        thread_local std::vector<double> buf;
        buf.resize(nv);
        double dy = 0.0;
        for (size_t i = 0; i < map.size(); ++i) {
            if (map[i] < 0)
                dy = v[i];
            else
                buf[map[i]] = v[i];
        }
        if (dy == 0.0)
            return 0.0;
        return dy * base->partials[pidx](buf.data(), c);
    };
    return f;
}

FunctionRef make_bp_scalar(const json& params, const std::vector<int>& blocks, int scalars)
{
    auto base = std::make_shared<FunctionRef>(function_from_json(params.at("base")));
    const int comp = params.at("comp").get<int>();
    require(comp >= 0 && comp < base->scalars, "bp_scalar: component out of range");
    require(base->has_scalar_partials(), "bp_scalar: base function '" + base->id + "' has no scalar partials");
    std::vector<int> expect = base->blocks;
    expect[0] += 1;
    require(blocks == expect, "bp_scalar: block layout does not match base");
    require(scalars == base->scalars, "bp_scalar: scalar count does not match base");
    const int b0 = base->blocks[0];
    const int nv = base->vector_args();

    FunctionRef f = base_ref("bp_scalar", params, blocks, scalars);
    f.eval = [base, b0, nv, comp](const double* v, const double* c) {
        thread_local std::vector<double> buf;
        buf.resize(nv);
        for (int i = 0; i < b0; ++i)
            buf[i] = v[i];
        const double dy = v[b0];
        for (int i = b0; i < nv; ++i)
            buf[i] = v[i + 1];
        if (dy == 0.0)
            return 0.0;
        return dy * base->scalar_partials[comp](buf.data(), c);
    };
    return f;
}

} // namespace

FunctionRef make_function(const std::string& id, const json& params, const std::vector<int>& blocks, int scalars)
{
    require(!blocks.empty(), "function '" + id + "' needs at least one block");
    for (int b : blocks)
        require(b >= 0, "negative block size");
    require(scalars >= 0, "negative scalar count");
    const int nv = total(blocks);
    FunctionRef f = base_ref(id, params, blocks, scalars);

    if (id == "identity") {
        require(blocks == std::vector<int>{1} && scalars == 0, "identity takes one vector");
        f.eval = [](const double* v, const double*) { return v[0]; };
        f.partials = {[](const double*, const double*) { return 1.0; }};
    } else if (id == "const") {
        const double value = params.value("value", 0.0);
        f.eval = [value](const double*, const double*) { return value; };
        f.partials.assign(nv, [](const double*, const double*) { return 0.0; });
        f.scalar_partials.assign(scalars, [](const double*, const double*) { return 0.0; });
    } else if (id == "act") {
        require(blocks == std::vector<int>{1} && scalars == 0, "act takes one vector");
        Activation a = Activation::named(params.at("name").get<std::string>());
        f.eval = [a](const double* v, const double*) { return a.f(v[0]); };
        f.partials = {[a](const double* v, const double*) { return a.df(v[0]); }};
    } else if (id == "lincomb") {
        require(blocks.size() == 1 && blocks[0] == scalars, "lincomb takes k vectors and k scalars");
        const int k = scalars;
        f.eval = [k](const double* v, const double* c) {
            double s = 0.0;
            for (int i = 0; i < k; ++i)
                s += v[i] * c[i];
            return s;
        };
        for (int i = 0; i < k; ++i) {
            f.partials.push_back([i](const double*, const double* c) { return c[i]; });
            f.scalar_partials.push_back([i](const double* v, const double*) { return v[i]; });
        }
    } else if (id == "sum") {
        f.eval = [nv, scalars](const double* v, const double* c) {
            double s = 0.0;
            for (int i = 0; i < nv; ++i)
                s += v[i];
            for (int i = 0; i < scalars; ++i)
                s += c[i];
            return s;
        };
        f.partials.assign(nv, [](const double*, const double*) { return 1.0; });
        f.scalar_partials.assign(scalars, [](const double*, const double*) { return 1.0; });
    } else if (id == "product") {
        require(scalars == 0 && nv >= 1, "product takes vectors only");
        f.eval = [nv](const double* v, const double*) {
            double s = 1.0;
            for (int i = 0; i < nv; ++i)
                s *= v[i];
            return s;
        };
        for (int k = 0; k < nv; ++k)
            f.partials.push_back([nv, k](const double* v, const double*) {
                double s = 1.0;
                for (int i = 0; i < nv; ++i)
                    if (i != k)
                        s *= v[i];
                return s;
            });
    } else if (id == "broadcast") {
        require(nv == 0, "broadcast takes scalars only");
        f.eval = [scalars](const double*, const double* c) {
            double s = 0.0;
            for (int i = 0; i < scalars; ++i)
                s += c[i];
            return s;
        };
        f.scalar_partials.assign(scalars, [](const double*, const double*) { return 1.0; });
    } else if (id == "bp_partial") {
        return make_bp_partial(params, blocks, scalars);
    } else if (id == "bp_scalar") {
        return make_bp_scalar(params, blocks, scalars);
    } else {
        throw Error(ErrorCode::UnknownFunction, "unknown function id '" + id + "'");
    }
    return f;
}

FunctionRef function_from_json(const json& j)
{
    try {
        return make_function(j.at("id").get<std::string>(), j.value("params", json::object()),
                             j.at("blocks").get<std::vector<int>>(), j.value("scalars", 0));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("bad function description: ") + e.what());
    }
}

namespace fns {
FunctionRef identity() { return make_function("identity", {}, {1}, 0); }
FunctionRef constant(double value, std::vector<int> blocks, int scalars)
{
    return make_function("const", json{{"value", value}}, blocks, scalars);
}
FunctionRef act(const std::string& name) { return make_function("act", json{{"name", name}}, {1}, 0); }
FunctionRef lincomb(int k) { return make_function("lincomb", {}, {k}, k); }
FunctionRef sum(std::vector<int> blocks, int scalars) { return make_function("sum", {}, blocks, scalars); }
FunctionRef product(std::vector<int> blocks) { return make_function("product", {}, blocks, 0); }
FunctionRef broadcast(int scalars) { return make_function("broadcast", {}, {0}, scalars); }
} // namespace fns

} // namespace tpl
