#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tpl/common.hpp"

namespace tpl {

using json = nlohmann::json;

// Scalar function of the flattened vector arguments (block 0 first) and scalar arguments.
using ScalarFn = std::function<double(const double* v, const double* c)>;

struct FunctionRef {
    std::string id;
    json params = json::object();
    std::vector<int> blocks; // vector arguments per block; block 0 is the un-averaged one
    int scalars = 0;
    ScalarFn eval;
    std::vector<ScalarFn> partials;        // one per flattened vector argument, or empty
    std::vector<ScalarFn> scalar_partials; // one per scalar argument, or empty

    int order() const { return static_cast<int>(blocks.size()); }
    int vector_args() const;
    bool has_partials() const { return static_cast<int>(partials.size()) == vector_args(); }
    bool has_scalar_partials() const { return static_cast<int>(scalar_partials.size()) == scalars; }
    json to_json() const; // id, params, blocks, scalars
};

// Builds a registered function. Known ids: identity, const, act, lincomb, sum, product,
// broadcast, bp_partial, bp_scalar. Throws UnknownFunction / ArityMismatch.
FunctionRef make_function(const std::string& id, const json& params, const std::vector<int>& blocks, int scalars);
FunctionRef function_from_json(const json& j);

namespace fns {
FunctionRef identity();
FunctionRef constant(double value, std::vector<int> blocks = {0}, int scalars = 0);
FunctionRef act(const std::string& name);
FunctionRef lincomb(int k);                    // sum_i v_i c_i
FunctionRef sum(std::vector<int> blocks, int scalars = 0);
FunctionRef product(std::vector<int> blocks); // product of all vector arguments
FunctionRef broadcast(int scalars);            // sum of scalar arguments, no vector args
} // namespace fns

struct Avg {
    std::string src, dst;
};

struct MatMul {
    std::string matrix;
    bool transpose = false;
    std::string src, dst;
};

// y_a = n^{-r} sum_{b_1..b_r} fn(block0_a; block1_{b_1}; ...; blockr_{b_r}; scalars).
// order() = number of blocks = r + 1.
struct OuterNonlin {
    std::vector<std::vector<std::string>> blocks;
    std::vector<std::string> scalars;
    FunctionRef fn;
    std::string dst;
    int order() const { return static_cast<int>(blocks.size()); }
};

using Instruction = std::variant<Avg, MatMul, OuterNonlin>;

struct ScalarDecl {
    std::string name;
    double limit = 0.0;
};

struct ProgramIR {
    std::vector<std::string> matrices;
    std::vector<std::string> vectors;
    std::vector<ScalarDecl> scalars;
    std::vector<Instruction> instructions;
    std::vector<std::string> outputs;
};

const std::string& defined_symbol(const Instruction& ins);

struct Diagnostic {
    int index = -1; // instruction index, -1 for declarations
    std::string code;
    std::string message;
};

std::vector<Diagnostic> validate(const ProgramIR& p, bool require_partials = false);

json program_to_json(const ProgramIR& p);
ProgramIR program_from_json(const json& j); // validates; throws on the first diagnostic

// Declarative builder; all add_* return *this.
class ProgramBuilder {
public:
    ProgramBuilder& matrix(const std::string& name);
    ProgramBuilder& vector(const std::string& name);
    ProgramBuilder& scalar(const std::string& name, double limit = 0.0);
    ProgramBuilder& avg(const std::string& src, const std::string& dst);
    ProgramBuilder& matmul(const std::string& m, const std::string& src, const std::string& dst, bool transpose = false);
    ProgramBuilder& outer(const FunctionRef& fn, std::vector<std::vector<std::string>> blocks,
                          std::vector<std::string> scalars, const std::string& dst);
    ProgramBuilder& output(const std::string& name);
    ProgramIR build() const; // validates

private:
    ProgramIR p_;
};

ProgramIR build_program(const json& spec);

// Forward pass of an L-hidden-layer MLP on one input of dimension d.
// Symbols: vectors w1_1..w1_d (first layer columns), v (output weights); matrices W2..WL;
// scalars xi_1..xi_d; h1..hL, x1..xL; output y = v * xL (so <y> is the output up to scaling).
struct MlpProgramNames {
    std::vector<std::string> input_scalars;
    std::vector<std::string> first_layer;
    std::vector<std::string> hidden_matrices;
    std::string output_weights = "v";
    std::string output = "y";
};

ProgramIR build_mlp_program(int L, int d, const std::string& activation, const std::vector<double>& xi = {},
                            MlpProgramNames* names = nullptr);

// Backpropagation program wrt `target` (pure extension of p).
// Symbol names: d[target]z for the final gradient of z, d[target|k]z for the contribution of
// instruction k.
ProgramIR backprop_transform(const ProgramIR& p, const std::string& target);
std::string grad_name(const std::string& target, const std::string& z);

struct TotalProgram {
    ProgramIR program;
    // base symbol -> per-input copies (includes d[..] symbols)
    std::map<std::string, std::vector<std::string>> groups;
};

std::string copy_name(const std::string& base, int copy);

// inputs[a] maps input scalar names to the values for copy a.
TotalProgram total_program(const ProgramIR& p, const std::vector<std::string>& outputs,
                           const std::vector<std::map<std::string, double>>& inputs);

} // namespace tpl
