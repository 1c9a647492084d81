#include "tpl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "tpl/config.hpp"

namespace tpl {

SweepMode sweep_mode_from(const std::string& s)
{
    if (s == "nt")
        return SweepMode::nt;
    if (s == "mu")
        return SweepMode::mu;
    throw Error(ErrorCode::InvalidConfig, "unknown sweep mode '" + s + "' (nt or mu)");
}

std::string to_string(SweepMode m) { return m == SweepMode::nt ? "nt" : "mu"; }

void SweepConfig::check() const
{
    if (widths.empty())
        throw Error(ErrorCode::InvalidConfig, "sweep needs at least one width");
    for (size_t i = 0; i < widths.size(); ++i) {
        if (widths[i] < 1)
            throw Error(ErrorCode::ZeroWidth, "widths must be positive");
        if (i > 0 && widths[i] <= widths[i - 1])
            throw Error(ErrorCode::InvalidConfig, "widths must be strictly increasing");
    }
    if (L < 1 || d < 1 || n_train < 0 || n_test < 0 || n_train + n_test < 1)
        throw Error(ErrorCode::InvalidConfig, "sweep needs L >= 1, d >= 1 and at least one input");
    if (trials < 1 || steps < 0 || K < 1 || block < 1 || m < 0)
        throw Error(ErrorCode::InvalidConfig, "invalid trials/steps/K/block/m");
    if (!(eta >= 0))
        throw Error(ErrorCode::InvalidConfig, "eta must be >= 0");
    const AbcdParam p = tpl::preset(param_name(), L);
    const std::string expect = mode == SweepMode::nt ? "operator_regime" : "feature_learning";
    const Classification c = classify(p);
    if (to_string(c.regime) != expect)
        throw Error(ErrorCode::InvalidConfig, "parametrization " + param_name() + " is " + to_string(c.regime) +
                                                  ", the " + to_string(mode) + " limit needs " + expect);
    mods.check();
}

double sign_test_p(int k, int n)
{
    if (n <= 0)
        return 1.0;
    double p = 0.0;
    for (int j = std::max(k, 0); j <= n; ++j)
        p += std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) - n * std::log(2.0));
    return std::min(p, 1.0);
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string timestamp()
{
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd json_vec(const json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

json steps_json(const std::vector<VectorXd>& s)
{
    json a = json::array();
    for (const auto& v : s)
        a.push_back(vec_json(v));
    return a;
}

std::vector<VectorXd> json_steps(const json& j)
{
    std::vector<VectorXd> s;
    for (const auto& v : j)
        s.push_back(json_vec(v));
    return s;
}

void summarize(const SweepConfig& cfg, SweepReport& r)
{
    std::vector<const WidthResult*> ok;
    for (const auto& w : r.widths)
        if (w.ok)
            ok.push_back(&w);
    r.cells = r.decreasing = r.monotone = 0;
    if (ok.size() < 2)
        return;
    int ties = 0;
    for (int t = 1; t <= cfg.steps; ++t) {
        const Index N = r.limit[t].size();
        for (Index i = 0; i < N; ++i) {
            ++r.cells;
            const double lo = ok.front()->gap[t](i), hi = ok.back()->gap[t](i);
            if (hi < lo)
                ++r.decreasing;
            else if (hi == lo)
                ++ties;
            bool mono = true;
            for (size_t k = 1; k < ok.size(); ++k)
                mono &= ok[k]->gap[t](i) < ok[k - 1]->gap[t](i);
            r.monotone += mono;
        }
    }
    if (r.cells > 0) {
        r.frac_decreasing = static_cast<double>(r.decreasing) / r.cells;
        r.frac_monotone = static_cast<double>(r.monotone) / r.cells;
    }
    r.sign_test_p = sign_test_p(r.decreasing, r.cells - ties);
    std::vector<std::pair<double, double>> pts;
    for (const auto* w : ok) {
        double s = 0.0;
        int c = 0;
        for (int t = 1; t <= cfg.steps; ++t) {
            s += w->gap[t].sum();
            c += static_cast<int>(w->gap[t].size());
        }
        if (c > 0 && s > 0)
            pts.emplace_back(static_cast<double>(w->width), s / c);
    }
    r.gap_slope = std::nan("");
    if (pts.size() >= 2) {
        // plain two-or-more point fit; no span requirement here
        double mx = 0, my = 0;
        for (auto& [x, y] : pts) {
            mx += std::log(x);
            my += std::log(y);
        }
        mx /= pts.size();
        my /= pts.size();
        double sxy = 0, sxx = 0;
        for (auto& [x, y] : pts) {
            sxy += (std::log(x) - mx) * (std::log(y) - my);
            sxx += (std::log(x) - mx) * (std::log(x) - mx);
        }
        r.gap_slope = sxy / sxx;
    }
}

} // namespace

SweepReport width_sweep(const SweepConfig& cfg)
{
    cfg.check();
    const auto t_all = std::chrono::steady_clock::now();
    SweepReport r;
    r.config = cfg;
    const Dataset ds = make_dataset(cfg.d, cfg.n_train, cfg.n_test, cfg.seed);
    const AbcdParam param = tpl::preset(cfg.param_name(), cfg.L);

    auto t0 = std::chrono::steady_clock::now();
    DynamicsTrace lim;
    if (cfg.mode == SweepMode::nt) {
        NTConfig c;
        c.L = cfg.L;
        c.activation = cfg.activation;
        c.xi = ds.xi;
        c.rule = cfg.rule;
        c.mods = cfg.mods;
        c.eps = ds.signal();
        c.eta = cfg.eta;
        c.steps = cfg.steps;
        c.m = cfg.samples();
        c.K = cfg.K;
        c.seed = cfg.seed;
        lim = nt_dynamics(c);
    } else {
        MuConfig c;
        c.L = cfg.L;
        c.activation = cfg.activation;
        c.xi = ds.xi;
        c.rule = cfg.rule;
        c.mods = cfg.mods;
        c.eps = ds.signal();
        c.eta = cfg.eta;
        c.steps = cfg.steps;
        c.m = cfg.samples();
        c.block = cfg.block;
        c.seed = cfg.seed;
        c.subtract_f0 = cfg.subtract_f0;
        lim = cfg.L == 1 ? mu_dynamics_shallow(c) : mu_dynamics_deep(c);
    }
    r.limit = lim.f;
    r.limit_stderr = lim.stderr_;
    r.metadata["limit_seconds"] = seconds_since(t0);

    json width_secs = json::array();
    for (Index n : cfg.widths) {
        t0 = std::chrono::steady_clock::now();
        WidthResult w;
        w.width = n;
        FiniteTrainConfig fc;
        fc.L = cfg.L;
        fc.width = n;
        fc.activation = cfg.activation;
        fc.xi = ds.xi;
        fc.param = param;
        fc.rule = cfg.rule;
        fc.mods = cfg.mods;
        fc.eps = ds.signal();
        fc.eta = cfg.eta;
        fc.steps = cfg.steps;
        fc.trials = cfg.trials;
        fc.seed = cfg.seed;
        fc.subtract_f0 = cfg.subtract_f0;
        try {
            FiniteTrace tr = train_finite_mlp(fc, cfg.threads);
            w.trials = std::move(tr.f);
        } catch (const Error& e) {
            if (!is_numerical(e.code()))
                throw;
            w.ok = false;
            w.error = e.what();
        }
        if (w.ok) {
            for (int t = 0; t <= cfg.steps; ++t) {
                VectorXd mu = VectorXd::Zero(ds.xi.cols()), sq = VectorXd::Zero(ds.xi.cols());
                for (const auto& tr : w.trials)
                    mu += tr[t];
                mu /= cfg.trials;
                for (const auto& tr : w.trials)
                    sq += (tr[t] - mu).array().square().matrix();
                w.mean.push_back(mu);
                w.spread.push_back((sq / std::max(cfg.trials - 1, 1)).cwiseSqrt());
                w.gap.push_back((mu - r.limit[t]).cwiseAbs());
            }
        }
        r.widths.push_back(std::move(w));
        width_secs.push_back(seconds_since(t0));
    }
    summarize(cfg, r);
    r.metadata["width_seconds"] = width_secs;
    r.metadata["total_seconds"] = seconds_since(t_all);
    r.metadata["timestamp"] = timestamp();
    return r;
}

json sweep_config_to_json(const SweepConfig& c)
{
    json j;
    j["mode"] = to_string(c.mode);
    j["widths"] = c.widths;
    j["L"] = c.L;
    j["activation"] = c.activation;
    j["preset"] = c.param_name();
    j["d"] = c.d;
    j["n_train"] = c.n_train;
    j["n_test"] = c.n_test;
    j["rule"] = rule_table_to_json(c.rule);
    j["modifiers"] = modifiers_to_json(c.mods);
    j["eta"] = c.eta;
    j["steps"] = c.steps;
    j["trials"] = c.trials;
    j["subtract_f0"] = c.subtract_f0;
    j["samples"] = c.samples();
    j["K"] = c.K;
    j["block"] = c.block;
    j["seed"] = c.seed;
    return j;
}

SweepConfig sweep_config_from_json(const json& j)
{
    const std::string w = "sweep";
    if (!j.is_object())
        throw Error(ErrorCode::InvalidConfig, "section 'sweep' must be an object");
    SweepConfig c;
    c.mode = sweep_mode_from(field<std::string>(j, "mode", "nt", w));
    c.widths = field<std::vector<Index>>(j, "widths", c.widths, w);
    c.L = field<int>(j, "L", c.mode == SweepMode::nt ? 4 : 2, w);
    c.activation = field<std::string>(j, "activation", c.activation, w);
    c.preset = field<std::string>(j, "preset", "", w);
    c.d = field<int>(j, "d", c.d, w);
    c.n_train = field<int>(j, "n_train", c.n_train, w);
    c.n_test = field<int>(j, "n_test", c.n_test, w);
    if (j.contains("rule"))
        c.rule = rule_table_from_json(j["rule"], w + ".rule");
    if (j.contains("modifiers"))
        c.mods = modifiers_from_json(j["modifiers"], w + ".modifiers");
    c.eta = field<double>(j, "eta", c.eta, w);
    c.steps = field<int>(j, "steps", c.steps, w);
    c.trials = field<int>(j, "trials", c.trials, w);
    c.subtract_f0 = field<bool>(j, "subtract_f0", c.subtract_f0, w);
    c.m = field<Index>(j, "samples", 0, w);
    c.K = field<int>(j, "K", c.K, w);
    c.block = field<Index>(j, "block", c.block, w);
    c.seed = field<std::uint64_t>(j, "seed", 0, w);
    c.threads = field<int>(j, "threads", 1, w);
    return c;
}

json report_to_json(const SweepReport& r)
{
    json j;
    j["config"] = sweep_config_to_json(r.config);
    j["limit"] = steps_json(r.limit);
    j["limit_stderr"] = steps_json(r.limit_stderr);
    json ws = json::array();
    for (const auto& w : r.widths) {
        json o;
        o["width"] = w.width;
        o["ok"] = w.ok;
        if (!w.ok)
            o["error"] = w.error;
        o["mean"] = steps_json(w.mean);
        o["spread"] = steps_json(w.spread);
        o["gap"] = steps_json(w.gap);
        json tr = json::array();
        for (const auto& t : w.trials)
            tr.push_back(steps_json(t));
        o["trials"] = tr;
        ws.push_back(o);
    }
    j["widths"] = ws;
    j["stats"] = {{"cells", r.cells},
                  {"decreasing", r.decreasing},
                  {"monotone", r.monotone},
                  {"frac_decreasing", r.frac_decreasing},
                  {"frac_monotone", r.frac_monotone},
                  {"sign_test_p", r.sign_test_p},
                  {"gap_slope", std::isfinite(r.gap_slope) ? json(r.gap_slope) : json(nullptr)}};
    j["metadata"] = r.metadata;
    return j;
}

SweepReport report_from_json(const json& j)
{
    try {
        SweepReport r;
        r.config = sweep_config_from_json(j.at("config"));
        r.limit = json_steps(j.at("limit"));
        r.limit_stderr = json_steps(j.at("limit_stderr"));
        for (const auto& o : j.at("widths")) {
            WidthResult w;
            w.width = o.at("width").get<Index>();
            w.ok = o.at("ok").get<bool>();
            w.error = o.value("error", std::string());
            w.mean = json_steps(o.at("mean"));
            w.spread = json_steps(o.at("spread"));
            w.gap = json_steps(o.at("gap"));
            for (const auto& t : o.at("trials"))
                w.trials.push_back(json_steps(t));
            r.widths.push_back(std::move(w));
        }
        const auto& s = j.at("stats");
        r.cells = s.at("cells").get<int>();
        r.decreasing = s.at("decreasing").get<int>();
        r.monotone = s.at("monotone").get<int>();
        r.frac_decreasing = s.at("frac_decreasing").get<double>();
        r.frac_monotone = s.at("frac_monotone").get<double>();
        r.sign_test_p = s.at("sign_test_p").get<double>();
        r.gap_slope = s.at("gap_slope").is_null() ? std::nan("") : s.at("gap_slope").get<double>();
        r.metadata = j.value("metadata", json::object());
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("malformed sweep report: ") + e.what());
    }
}

std::vector<std::string> write_sweep_files(const std::string& dir, const SweepReport& r)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::vector<std::string> paths;
    const std::string rp = (fs::path(dir) / "report.json").string();
    {
        std::ofstream os(rp);
        if (!os)
            throw Error(ErrorCode::Io, "cannot write '" + rp + "'");
        os << report_to_json(r).dump(1) << '\n';
    }
    paths.push_back(rp);
    const int N = r.limit.empty() ? 0 : static_cast<int>(r.limit[0].size());
    const int first = r.config.n_test > 0 ? N - r.config.n_test : 0;
    for (int i = first; i < N; ++i) {
        const std::string p = (fs::path(dir) / ("input_" + std::to_string(i) + ".csv")).string();
        std::ofstream os(p);
        if (!os)
            throw Error(ErrorCode::Io, "cannot write '" + p + "'");
        os.precision(17);
        os << "step,limit,limit_stderr";
        for (const auto& w : r.widths)
            os << ",mean_" << w.width << ",std_" << w.width;
        os << '\n';
        for (size_t t = 0; t < r.limit.size(); ++t) {
            os << t << ',' << r.limit[t](i) << ',' << r.limit_stderr[t](i);
            for (const auto& w : r.widths) {
                if (w.ok)
                    os << ',' << w.mean[t](i) << ',' << w.spread[t](i);
                else
                    os << ",,";
            }
            os << '\n';
        }
        paths.push_back(p);
    }
    return paths;
}

namespace {

double t975(int df)
{
    static const double tab[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
                                 2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086};
    if (df < 1)
        return std::numeric_limits<double>::infinity();
    return df <= 20 ? tab[df - 1] : 1.96;
}

void check_points(const std::vector<double>& ns)
{
    if (ns.size() < 3)
        throw Error(ErrorCode::TooFewPoints, "need at least 3 widths, got " + std::to_string(ns.size()));
    const auto [lo, hi] = std::minmax_element(ns.begin(), ns.end());
    if (!(*lo > 0) || *hi / *lo < 4.0)
        throw Error(ErrorCode::TooFewPoints, "widths must span at least two octaves");
}

SlopeFit ols(const std::vector<double>& lx, const std::vector<double>& ly)
{
    const int p = static_cast<int>(lx.size());
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / p;
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / p;
    double sxx = 0, sxy = 0;
    for (int i = 0; i < p; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    SlopeFit f;
    f.points = p;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0;
    for (int i = 0; i < p; ++i) {
        const double e = ly[i] - f.intercept - f.slope * lx[i];
        ssr += e * e;
    }
    const double se = p > 2 ? std::sqrt(ssr / (p - 2) / sxx) : 0.0;
    f.ci_low = f.slope - t975(p - 2) * se;
    f.ci_high = f.slope + t975(p - 2) * se;
    return f;
}

} // namespace

SlopeFit convergence_slope(const std::vector<std::pair<double, double>>& pts)
{
    std::vector<double> ns, lx, ly;
    for (const auto& [n, e] : pts) {
        if (!(e > 0) || !std::isfinite(e))
            throw Error(ErrorCode::InvalidArgument, "errors must be positive and finite");
        ns.push_back(n);
        lx.push_back(std::log(n));
        ly.push_back(std::log(e));
    }
    check_points(ns);
    return ols(lx, ly);
}

SlopeFit convergence_slope_trials(const std::vector<double>& ns, const std::vector<std::vector<double>>& errors,
                                  int resamples, std::uint64_t seed)
{
    if (ns.size() != errors.size())
        throw Error(ErrorCode::DimensionMismatch, "one error list per width");
    std::vector<std::pair<double, double>> pts;
    for (size_t w = 0; w < ns.size(); ++w) {
        if (errors[w].empty())
            throw Error(ErrorCode::TooFewPoints, "width without trials");
        pts.emplace_back(ns[w], std::accumulate(errors[w].begin(), errors[w].end(), 0.0) / errors[w].size());
    }
    SlopeFit f = convergence_slope(pts);
    if (resamples < 2)
        return f;
    Rng rng = make_rng(seed, {0xb007});
    std::vector<double> slopes;
    std::vector<double> lx, ly(ns.size());
    for (double n : ns)
        lx.push_back(std::log(n));
    for (int b = 0; b < resamples; ++b) {
        bool ok = true;
        for (size_t w = 0; w < ns.size(); ++w) {
            std::uniform_int_distribution<size_t> pick(0, errors[w].size() - 1);
            double s = 0;
            for (size_t k = 0; k < errors[w].size(); ++k)
                s += errors[w][pick(rng)];
            s /= errors[w].size();
            ok &= s > 0;
            ly[w] = std::log(s);
        }
        if (ok)
            slopes.push_back(ols(lx, ly).slope);
    }
    if (slopes.size() >= 2) {
        std::sort(slopes.begin(), slopes.end());
        f.ci_low = slopes[static_cast<size_t>(0.025 * (slopes.size() - 1))];
        f.ci_high = slopes[static_cast<size_t>(0.975 * (slopes.size() - 1))];
    }
    return f;
}

std::vector<double> finite_scalar_trials(const ProgramIR& p, const std::string& name, Index n, int trials,
                                         const InitDistribution& dist, std::uint64_t seed)
{
    std::vector<double> out;
    for (int k = 0; k < trials; ++k) {
        const Assignment a = sample_init(p, n, dist, stream_key(seed, {static_cast<std::uint64_t>(k)}));
        const ExecResult r = execute(p, a);
        auto it = r.scalars.find(name);
        if (it == r.scalars.end())
            throw Error(ErrorCode::UndefinedSymbol, "program has no scalar '" + name + "'");
        out.push_back(it->second);
    }
    return out;
}

ProgramIR gram_program()
{
    return ProgramBuilder()
        .vector("x")
        .matrix("W")
        .matmul("W", "x", "g")
        .matmul("W", "g", "u", true)
        .outer(fns::product({2}), {{"x", "u"}}, {}, "xu")
        .avg("xu", "c")
        .output("u")
        .build();
}

ProgramIR nngp_program(int L, const std::string& activation, const std::vector<double>& xi)
{
    ProgramIR p = build_mlp_program(L, static_cast<int>(xi.size()), activation, xi);
    const std::string xL = "x" + std::to_string(L);
    p.instructions.push_back(OuterNonlin{{{xL, xL}}, {}, fns::product({2}), "xx"});
    p.instructions.push_back(Avg{"xx", "c"});
    const auto diags = validate(p);
    if (!diags.empty())
        throw Error(ErrorCode::InvalidArgument, diags[0].message);
    return p;
}

void gauss_hermite(int nodes, std::vector<double>& x, std::vector<double>& w)
{
    if (nodes < 1)
        throw Error(ErrorCode::InvalidArgument, "need at least one node");
    MatrixXd J = MatrixXd::Zero(nodes, nodes);
    for (int k = 1; k < nodes; ++k)
        J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(J);
    x.assign(es.eigenvalues().data(), es.eigenvalues().data() + nodes);
    w.resize(nodes);
    for (int i = 0; i < nodes; ++i)
        w[i] = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
}

double nngp_limit(int L, const std::string& activation, const std::vector<double>& xi, int nodes)
{
    const Activation act = Activation::named(activation);
    std::vector<double> z, w;
    gauss_hermite(nodes, z, w);
    double q = 0.0;
    for (double v : xi)
        q += v * v;
    for (int l = 1; l <= L; ++l) {
        double e = 0.0;
        for (int i = 0; i < nodes; ++i) {
            const double y = act.f(std::sqrt(q) * z[i]);
            e += w[i] * y * y;
        }
        q = e;
    }
    return q;
}

std::vector<GradCheckEntry> backprop_check(int L, int d, Index n, const std::string& activation, std::uint64_t seed,
                                           double step)
{
    Rng rng = make_rng(seed, {0xb9});
    std::vector<double> xi(d);
    fill_normal(xi.data(), d, rng);
    for (double& v : xi)
        v /= std::sqrt(static_cast<double>(d));
    MlpProgramNames names;
    const ProgramIR p = build_mlp_program(L, d, activation, xi, &names);
    const ProgramIR q = backprop_transform(p, names.output);
    Assignment a = sample_init(p, n, InitDistribution{}, seed);
    const ExecResult g = execute(q, a);
    auto objective = [&](const Assignment& b) { return execute(p, b).vectors.at(names.output).sum(); };

    std::vector<GradCheckEntry> out;
    auto rel = [](const ArrayXXd& an, const ArrayXXd& fd) {
        const double scale = std::max(an.abs().maxCoeff(), 1e-300);
        return (an - fd).abs().maxCoeff() / scale;
    };
    std::vector<std::string> vecs = names.first_layer;
    vecs.push_back(names.output_weights);
    for (const auto& v : vecs) {
        const ArrayXXd an = g.vectors.at(grad_name(names.output, v)).array();
        ArrayXXd fd(n, 1);
        VectorXd& x = a.vectors[v];
        for (Index i = 0; i < n; ++i) {
            const double keep = x(i);
            x(i) = keep + step;
            const double fp = objective(a);
            x(i) = keep - step;
            const double fm = objective(a);
            x(i) = keep;
            fd(i, 0) = (fp - fm) / (2 * step);
        }
        out.push_back({v, rel(an, fd)});
    }
    for (int l = 2; l <= L; ++l) {
        const std::string W = "W" + std::to_string(l);
        const VectorXd& dh = g.vectors.at(grad_name(names.output, "h" + std::to_string(l)));
        const VectorXd& xp = g.vectors.at("x" + std::to_string(l - 1));
        const ArrayXXd an = (dh * xp.transpose()).array();
        ArrayXXd fd(n, n);
        MatrixXd& M = a.matrices[W];
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i) {
                const double keep = M(i, j);
                M(i, j) = keep + step;
                const double fp = objective(a);
                M(i, j) = keep - step;
                const double fm = objective(a);
                M(i, j) = keep;
                fd(i, j) = (fp - fm) / (2 * step);
            }
        out.push_back({W, rel(an, fd)});
    }
    return out;
}

std::vector<double> kernel_drift(FiniteTrainConfig cfg, const std::vector<Index>& widths, int layer, int threads)
{
    cfg.steps = 1;
    cfg.kernel_layers = {layer};
    std::vector<double> out;
    for (Index n : widths) {
        cfg.width = n;
        const FiniteTrace tr = train_finite_mlp(cfg, threads);
        double s = 0.0;
        for (const auto& k : tr.kernels)
            s += (k[0][1] - k[0][0]).norm();
        out.push_back(s / cfg.trials);
    }
    return out;
}

} // namespace tpl
