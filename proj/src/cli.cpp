#include "tpl/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "tpl/config.hpp"
#include "tpl/harness.hpp"
#include "tpl/limits.hpp"
#include "tpl/param.hpp"

namespace tpl {

namespace {

namespace fs = std::filesystem;

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<Index> samples;
    std::string widths;
    std::optional<int> steps;
    int threads = 0;
};

std::vector<Index> parse_widths(const std::string& s)
{
    std::vector<Index> w;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            size_t used = 0;
            const long long v = std::stoll(tok, &used);
            if (used != tok.size())
                throw std::invalid_argument(tok);
            w.push_back(static_cast<Index>(v));
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidConfig, "--widths: '" + tok + "' is not an integer");
        }
    }
    if (w.empty())
        throw Error(ErrorCode::InvalidConfig, "--widths is empty");
    return w;
}

class Context {
public:
    Context(const Globals& g, std::optional<ExperimentConfig> cfg) : g_(g), cfg_(std::move(cfg)) {}

    const json& section() const
    {
        static const json empty = json::object();
        return cfg_ ? cfg_->section : empty;
    }
    std::uint64_t seed() const
    {
        if (g_.seed)
            return *g_.seed;
        const std::uint64_t top = cfg_ ? cfg_->seed : 0;
        return field<std::uint64_t>(section(), "seed", top, cfg_ ? cfg_->workflow : "config");
    }
    int threads() const { return g_.threads > 0 ? g_.threads : default_threads(); }
    std::string out_dir(const std::string& sub) const
    {
        std::string base = g_.out;
        if (base.empty() && cfg_)
            base = cfg_->out;
        if (base.empty()) {
            const char* env = std::getenv(kOutDirEnv);
            base = env && *env ? env : "tpl-out";
        }
        const fs::path p = fs::path(base) / sub;
        std::error_code ec;
        fs::create_directories(p, ec);
        if (ec)
            throw Error(ErrorCode::Io, "cannot create '" + p.string() + "': " + ec.message());
        return p.string();
    }
    const Globals& globals() const { return g_; }

private:
    Globals g_;
    std::optional<ExperimentConfig> cfg_;
};

void write_json(const std::string& path, const json& j)
{
    std::ofstream os(path);
    if (!os)
        throw Error(ErrorCode::Io, "cannot write '" + path + "'");
    os << j.dump(1) << '\n';
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

// Fields shared by the training-style workflows.
struct Experiment {
    int L = 2;
    std::string activation = "srelu";
    Dataset ds;
    RuleTable rule = UpdateRule::adam(0.9, 0.999, 1e-4);
    Modifiers mods;
    double eta = 0.2;
    int steps = 8;
    std::uint64_t seed = 0;
    std::vector<int> kernel_layers;
};

Experiment read_experiment(const Context& ctx, const std::string& w, int default_L)
{
    const json& s = ctx.section();
    Experiment e;
    e.L = field<int>(s, "L", default_L, w);
    e.activation = field<std::string>(s, "activation", e.activation, w);
    Activation::named(e.activation);
    if (s.contains("rule"))
        e.rule = rule_table_from_json(s["rule"], w + ".rule");
    if (s.contains("modifiers"))
        e.mods = modifiers_from_json(s["modifiers"], w + ".modifiers");
    e.eta = field<double>(s, "eta", e.eta, w);
    e.steps = ctx.globals().steps ? *ctx.globals().steps : field<int>(s, "steps", e.steps, w);
    e.seed = ctx.seed();
    e.kernel_layers = field<std::vector<int>>(s, "kernel_layers", {}, w);
    const int d = field<int>(s, "d", 10, w);
    const int n_train = field<int>(s, "n_train", 100, w);
    const int n_test = field<int>(s, "n_test", 4, w);
    if (d < 1 || n_train < 0 || n_test < 0 || n_train + n_test < 1)
        throw Error(ErrorCode::InvalidConfig, "'" + w + "': need d >= 1 and at least one input");
    e.ds = make_dataset(d, n_train, n_test, e.seed);
    return e;
}

void write_trace_outputs(const std::string& dir, const DynamicsTrace& tr)
{
    write_dynamics_csv(join(dir, "trace.csv"), tr);
    for (size_t k = 0; k < tr.kernel_layers.size(); ++k)
        write_kernel_csv(join(dir, "kernel_l" + std::to_string(tr.kernel_layers[k]) + ".csv"), tr.kernels[k]);
}

void print_last(const std::vector<VectorXd>& f)
{
    if (f.empty())
        return;
    std::cout << "f_T =";
    for (Index i = 0; i < f.back().size(); ++i)
        std::cout << ' ' << f.back()(i);
    std::cout << '\n';
}

int cmd_classify(const Context& ctx, const std::string& preset_name, std::optional<int> L)
{
    const json& s = ctx.section();
    AbcdParam p;
    if (!preset_name.empty()) {
        p = preset(preset_name, L.value_or(3));
    } else if (s.contains("preset")) {
        p = preset(field<std::string>(s, "preset", "", "classify"), L.value_or(field<int>(s, "L", 3, "classify")));
    } else if (s.contains("a") || s.contains("b") || s.contains("c") || s.contains("d")) {
        try {
            p = AbcdParam::from_json(s);
        } catch (const Error& e) {
            throw Error(ErrorCode::InvalidConfig, std::string("section 'classify': ") + e.what());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidConfig, std::string("section 'classify': ") + e.what());
        }
    } else {
        throw Error(ErrorCode::InvalidConfig, "classify needs --preset or a config with a preset or a,b,c,d arrays");
    }
    const Classification c = classify(p);
    std::cout << classification_table(p, c);
    json j = {{"param", p.to_json()}, {"classification", c.to_json()}};
    std::cout << j.dump() << '\n';
    write_json(join(ctx.out_dir("classify"), "classification.json"), j);
    return 0;
}

int cmd_nt(const Context& ctx)
{
    const std::string w = "nt";
    Experiment e = read_experiment(ctx, w, 2);
    const json& s = ctx.section();
    NTConfig c;
    c.L = e.L;
    c.activation = e.activation;
    c.xi = e.ds.xi;
    c.rule = e.rule;
    c.mods = e.mods;
    c.eps = e.ds.signal();
    c.eta = e.eta;
    c.steps = e.steps;
    c.m = ctx.globals().samples ? *ctx.globals().samples : field<Index>(s, "samples", c.m, w);
    c.K = field<int>(s, "K", c.K, w);
    c.seed = e.seed;
    c.f0 = f0_mode_from(field<std::string>(s, "f0", "zero", w));
    c.wd_path = field<bool>(s, "wd_path", false, w);
    c.kernel_layers = e.kernel_layers;
    const DynamicsTrace tr = nt_dynamics(c);
    const std::string dir = ctx.out_dir("nt");
    write_trace_outputs(dir, tr);
    print_last(tr.f);
    std::cout << "wrote " << join(dir, "trace.csv") << '\n';
    return 0;
}

int cmd_mu(const Context& ctx)
{
    const std::string w = "mu";
    Experiment e = read_experiment(ctx, w, 2);
    const json& s = ctx.section();
    MuConfig c;
    c.L = e.L;
    c.activation = e.activation;
    c.xi = e.ds.xi;
    c.rule = e.rule;
    c.mods = e.mods;
    c.eps = e.ds.signal();
    c.eta = e.eta;
    c.steps = e.steps;
    c.m = ctx.globals().samples ? *ctx.globals().samples : field<Index>(s, "samples", c.m, w);
    c.block = field<Index>(s, "block", c.block, w);
    c.seed = e.seed;
    c.subtract_f0 = field<bool>(s, "subtract_f0", true, w);
    c.kernel_layers = e.kernel_layers;
    const DynamicsTrace tr = c.L == 1 ? mu_dynamics_shallow(c) : mu_dynamics_deep(c);
    const std::string dir = ctx.out_dir("mu");
    write_trace_outputs(dir, tr);
    print_last(tr.f);
    std::cout << "wrote " << join(dir, "trace.csv") << '\n';
    return 0;
}

int cmd_train(const Context& ctx)
{
    const std::string w = "train";
    Experiment e = read_experiment(ctx, w, 2);
    const json& s = ctx.section();
    FiniteTrainConfig c;
    c.L = e.L;
    c.width = field<Index>(s, "width", 256, w);
    if (!ctx.globals().widths.empty()) {
        const auto ws = parse_widths(ctx.globals().widths);
        if (ws.size() != 1)
            throw Error(ErrorCode::InvalidConfig, "train takes a single width");
        c.width = ws[0];
    }
    c.activation = e.activation;
    c.xi = e.ds.xi;
    const std::string pname = field<std::string>(s, "preset", "muP", w);
    c.param = s.contains("param") ? AbcdParam::from_json(s["param"]) : preset(pname, e.L);
    c.rule = e.rule;
    c.mods = s.contains("modifiers") ? e.mods : preset_modifiers(c.param.name);
    c.eps = e.ds.signal();
    c.eta = e.eta;
    c.steps = e.steps;
    c.trials = field<int>(s, "trials", 10, w);
    c.seed = e.seed;
    c.subtract_f0 = field<bool>(s, "subtract_f0", true, w);
    c.init = InitDistribution::named(field<std::string>(s, "init", "gaussian", w));
    c.kernel_layers = e.kernel_layers;
    const FiniteTrace tr = train_finite_mlp(c, ctx.threads());
    const std::string dir = ctx.out_dir("train");
    write_trace_csv(join(dir, "trace.csv"), tr);
    for (size_t k = 0; k < c.kernel_layers.size(); ++k)
        write_kernel_csv(join(dir, "kernel_l" + std::to_string(c.kernel_layers[k]) + ".csv"), tr.kernels[0][k]);
    std::cout << "trained " << c.trials << " trials at width " << c.width << "; wrote " << join(dir, "trace.csv")
              << '\n';
    return 0;
}

int cmd_sweep(const Context& ctx, const std::string& mode)
{
    json s = ctx.section();
    if (!mode.empty())
        s["mode"] = mode;
    SweepConfig c = sweep_config_from_json(s);
    c.seed = ctx.seed();
    c.threads = ctx.threads();
    if (!ctx.globals().widths.empty())
        c.widths = parse_widths(ctx.globals().widths);
    if (ctx.globals().steps)
        c.steps = *ctx.globals().steps;
    if (ctx.globals().samples)
        c.m = *ctx.globals().samples;
    const SweepReport r = width_sweep(c);
    const auto paths = write_sweep_files(ctx.out_dir("sweep"), r);
    int failed = 0;
    for (const auto& wr : r.widths) {
        if (!wr.ok) {
            std::cerr << "width " << wr.width << " failed: " << wr.error << '\n';
            ++failed;
        }
    }
    std::cout << "cells=" << r.cells << " decreasing=" << r.decreasing << " frac=" << r.frac_decreasing
              << " sign_p=" << r.sign_test_p << " gap_slope=" << r.gap_slope << '\n';
    for (const auto& p : paths)
        std::cout << "wrote " << p << '\n';
    return failed ? 2 : 0;
}

ProgramIR program_of(const json& s, const std::string& w)
{
    if (!s.contains("program"))
        throw Error(ErrorCode::InvalidConfig, "section '" + w + "' needs a 'program'");
    try {
        return build_program(s["program"]);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, "'" + w + ".program': " + e.what());
    }
}

int cmd_ket(const Context& ctx, const std::string& workflow)
{
    const json& s = ctx.section();
    const std::string w = workflow.empty() ? "program" : workflow;
    const ProgramIR p = program_of(s, w);
    LimitOptions lo;
    lo.m = ctx.globals().samples ? *ctx.globals().samples : field<Index>(s, "samples", 100000, w);
    lo.K = field<int>(s, "K", lo.K, w);
    lo.seed = ctx.seed();
    const std::string dot = field<std::string>(s, "dot", "tracked", w);
    if (dot == "stein")
        lo.dot = DotMode::stein;
    else if (dot != "tracked")
        throw Error(ErrorCode::InvalidConfig, "'" + w + ".dot' must be tracked or stein");
    const KetState st = run_limit(p, lo);
    const std::string dir = ctx.out_dir("ket");
    write_snapshot(join(dir, "snapshot.csv"), st, field<std::vector<std::string>>(s, "columns", {}, w));
    json scal = json::object();
    for (const auto& [k, v] : st.scalars)
        scal[k] = v;
    json out = {{"samples", lo.m}, {"scalars", scal}};

    if (w == "ketcheck") {
        std::vector<Index> widths = field<std::vector<Index>>(s, "widths", {64, 256, 1024}, w);
        if (!ctx.globals().widths.empty())
            widths = parse_widths(ctx.globals().widths);
        const int trials = field<int>(s, "trials", 16, w);
        const auto dist = InitDistribution::named(field<std::string>(s, "init", "gaussian", w));
        std::vector<std::string> names = field<std::vector<std::string>>(s, "scalars", {}, w);
        if (names.empty())
            for (const auto& [k, v] : st.scalars)
                names.push_back(k);
        json checks = json::array();
        for (const auto& name : names) {
            if (!st.scalars.count(name))
                throw Error(ErrorCode::UndefinedSymbol, "no scalar '" + name + "' in the program");
            const double lim = st.scalars.at(name);
            std::vector<double> ns;
            std::vector<std::vector<double>> errs;
            json rows = json::array();
            for (Index n : widths) {
                const auto vals = finite_scalar_trials(p, name, n, trials, dist, ctx.seed());
                std::vector<double> e;
                double mean = 0;
                for (double v : vals) {
                    e.push_back(std::abs(v - lim));
                    mean += v / vals.size();
                }
                rows.push_back({{"width", n}, {"mean", mean}, {"values", vals}});
                ns.push_back(static_cast<double>(n));
                errs.push_back(e);
            }
            json entry = {{"scalar", name}, {"limit", lim}, {"widths", rows}};
            try {
                const SlopeFit f = convergence_slope_trials(ns, errs, 500, ctx.seed());
                entry["slope"] = {{"value", f.slope}, {"ci_low", f.ci_low}, {"ci_high", f.ci_high}};
                std::cout << name << ": limit " << lim << ", error slope " << f.slope << " [" << f.ci_low << ", "
                          << f.ci_high << "]\n";
            } catch (const Error& e) {
                if (e.code() != ErrorCode::TooFewPoints)
                    throw;
                std::cout << name << ": limit " << lim << " (" << e.what() << ")\n";
            }
            checks.push_back(entry);
        }
        out["checks"] = checks;
        write_json(join(dir, "ketcheck.json"), out);
    } else {
        for (const auto& [k, v] : st.scalars)
            std::cout << k << " = " << v << '\n';
        write_json(join(dir, "scalars.json"), out);
    }
    std::cout << "wrote " << join(dir, "snapshot.csv") << '\n';
    return 0;
}

int cmd_backprop(const Context& ctx, int L, int d, Index n, const std::string& act, double tol)
{
    const auto entries = backprop_check(L, d, n, act, ctx.seed());
    json j = json::array();
    bool ok = true;
    for (const auto& e : entries) {
        std::cout << e.param << " rel_error=" << e.rel_error << '\n';
        j.push_back({{"param", e.param}, {"rel_error", e.rel_error}});
        ok &= e.rel_error <= tol;
    }
    write_json(join(ctx.out_dir("backprop"), "gradcheck.json"),
               {{"L", L}, {"d", d}, {"width", n}, {"activation", act}, {"tolerance", tol}, {"entries", j}});
    std::cout << (ok ? "PASS" : "FAIL") << " (tolerance " << tol << ")\n";
    return ok ? 0 : 2;
}

const std::map<std::string, std::vector<std::string>>& accepted_sections()
{
    static const std::map<std::string, std::vector<std::string>> m = {
        {"classify", {"classify"}}, {"nt-limit", {"nt"}},   {"mu-limit", {"mu"}},
        {"train", {"train"}},       {"sweep", {"sweep"}}, {"ket-run", {"program", "ketcheck"}},
        {"backprop-check", {}},
    };
    return m;
}

} // namespace

int run_cli(const std::vector<std::string>& args)
{
    CLI::App app{"Tensor-program limits: parametrization classification, infinite-width dynamics and sweeps"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    std::uint64_t seed = 0;
    Index samples = 0;
    int steps = 0;
    auto* o_seed = app.add_option("--seed", seed, "Global seed");
    app.add_option("--out", g.out, std::string("Output directory (default $") + kOutDirEnv + " or ./tpl-out)");
    auto* o_samples = app.add_option("--samples", samples, "Monte-Carlo samples m for limit runs");
    app.add_option("--widths", g.widths, "Comma-separated widths");
    auto* o_steps = app.add_option("--steps", steps, "Training steps T");
    app.add_option("--threads", g.threads, "Worker threads (default: logical cores)");

    std::map<std::string, std::string> config_path;
    auto add_cmd = [&](const std::string& name, const std::string& help) {
        CLI::App* c = app.add_subcommand(name, help);
        c->add_option("config", config_path[name], "Experiment config (JSON)");
        return c;
    };
    std::string preset_name, mode, activation = "srelu";
    int L_cls = 0, L_bp = 2, d_bp = 3;
    Index n_bp = 64;
    double tol = 1e-6;
    CLI::App* c_classify = add_cmd("classify", "Classify an abcd-parametrization");
    c_classify->add_option("--preset", preset_name, "SP, NTP, muP, NTP_clip, muP_clip, muP_clip_wnorm or UP(s)");
    auto* o_L = c_classify->add_option("--L", L_cls, "Number of hidden layers (default 3)");
    add_cmd("nt-limit", "Neural-tangent limit dynamics");
    add_cmd("mu-limit", "Maximal-update limit dynamics");
    add_cmd("train", "Finite-width training");
    CLI::App* c_sweep = add_cmd("sweep", "Width sweep against the limit");
    c_sweep->add_option("--mode", mode, "nt or mu");
    add_cmd("ket-run", "Execute a program in the infinite-width limit");
    CLI::App* c_bp = add_cmd("backprop-check", "Backprop program vs finite differences");
    c_bp->add_option("--L", L_bp, "Hidden layers");
    c_bp->add_option("--d", d_bp, "Input dimension");
    c_bp->add_option("--width", n_bp, "Width n");
    c_bp->add_option("--activation", activation, "Activation");
    c_bp->add_option("--tolerance", tol, "Pass threshold on the relative error");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty())
        rev.pop_back();
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    if (o_seed->count())
        g.seed = seed;
    if (o_samples->count())
        g.samples = samples;
    if (o_steps->count())
        g.steps = steps;

    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        std::optional<ExperimentConfig> cfg;
        const std::string& path = config_path[cmd];
        if (!path.empty()) {
            cfg = load_config(path);
            const auto& ok = accepted_sections().at(cmd);
            if (std::find(ok.begin(), ok.end(), cfg->workflow) == ok.end())
                throw Error(ErrorCode::InvalidConfig, path + ": section '" + cfg->workflow + "' does not fit '" + cmd + "'");
        }
        const Context ctx(g, cfg);
        if (cmd == "classify")
            return cmd_classify(ctx, preset_name, o_L->count() ? std::optional<int>(L_cls) : std::nullopt);
        if (cmd == "nt-limit")
            return cmd_nt(ctx);
        if (cmd == "mu-limit")
            return cmd_mu(ctx);
        if (cmd == "train")
            return cmd_train(ctx);
        if (cmd == "sweep")
            return cmd_sweep(ctx, mode);
        if (cmd == "ket-run")
            return cmd_ket(ctx, cfg ? cfg->workflow : "");
        return cmd_backprop(ctx, L_bp, d_bp, n_bp, activation, tol);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return is_numerical(e.code()) ? 2 : 1;
    } catch (const json::exception& e) {
        std::cerr << "error: InvalidConfig: " << e.what() << '\n';
        return 1;
    }
}

int run_cli(int argc, const char* const* argv)
{
    std::vector<std::string> args(argv, argv + argc);
    return run_cli(args);
}

} // namespace tpl
