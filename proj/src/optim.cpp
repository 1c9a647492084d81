#include "tpl/optim.hpp"

#include <cmath>

namespace tpl {

UpdateRule UpdateRule::sgd() { return UpdateRule{}; }

UpdateRule UpdateRule::momentum(double beta)
{
    UpdateRule r;
    r.kind = RuleKind::momentum;
    r.beta = beta;
    return r;
}

UpdateRule UpdateRule::signsgd(double eps)
{
    UpdateRule r;
    r.kind = RuleKind::signsgd;
    r.eps = eps;
    return r;
}

UpdateRule UpdateRule::adam(double beta1, double beta2, double eps)
{
    UpdateRule r;
    r.kind = RuleKind::adam;
    r.beta1 = beta1;
    r.beta2 = beta2;
    r.eps = eps;
    return r;
}

UpdateRule UpdateRule::make_custom(std::string id, HistoryFn fn, bool memoryless)
{
    UpdateRule r;
    r.kind = RuleKind::custom;
    r.custom_id = std::move(id);
    r.custom = std::move(fn);
    r.custom_memoryless = memoryless;
    return r;
}

bool UpdateRule::memoryless() const
{
    switch (kind) {
    case RuleKind::sgd:
    case RuleKind::signsgd: return true;
    case RuleKind::momentum: return beta == 0.0;
    case RuleKind::adam: return false;
    case RuleKind::custom: return custom_memoryless;
    }
    return false;
}

std::string UpdateRule::name() const
{
    switch (kind) {
    case RuleKind::sgd: return "sgd";
    case RuleKind::momentum: return "momentum";
    case RuleKind::signsgd: return "signsgd";
    case RuleKind::adam: return "adam";
    case RuleKind::custom: return "custom:" + custom_id;
    }
    return "?";
}

void UpdateRule::check(bool limit_mode) const
{
    auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
    switch (kind) {
    case RuleKind::adam:
        if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
            bad("adam needs 0 <= beta1, beta2 < 1");
        if (!(eps > 0))
            bad("adam needs eps > 0");
        break;
    case RuleKind::signsgd:
        if (!(eps >= 0))
            bad("signsgd needs eps >= 0");
        if (limit_mode && eps == 0)
            bad("signsgd with eps = 0 is not allowed in limit mode");
        break;
    case RuleKind::momentum:
        if (!(beta >= 0 && beta < 1))
            bad("momentum needs 0 <= beta < 1");
        break;
    case RuleKind::custom:
        if (!custom)
            bad("custom rule '" + custom_id + "' has no function");
        break;
    case RuleKind::sgd: break;
    }
}

const UpdateRule& RuleTable::at(int layer) const
{
    auto it = overrides.find(layer);
    return it == overrides.end() ? base : it->second;
}

namespace {

inline double sign_smooth(double g, double eps)
{
    if (eps == 0.0)
        return g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0);
    return g / std::sqrt(g * g + eps * eps);
}

// bias-corrected EMA recursion coefficients at step t: mhat_t = a*mhat_{t-1} + b*g_t
inline void ema_coeffs(double beta, int t, double& a, double& b)
{
    const double bt = std::pow(beta, t);
    const double bt1 = bt * beta;
    a = beta * (1.0 - bt) / (1.0 - bt1);
    b = (1.0 - beta) / (1.0 - bt1);
}

void check_finite(std::span<const double> h)
{
    for (double x : h)
        if (std::isnan(x))
            throw Error(ErrorCode::NaNInHistory, "NaN in gradient history");
}

} // namespace

double q_scalar(const UpdateRule& rule, std::span<const double> h)
{
    if (h.empty())
        throw Error(ErrorCode::InvalidArgument, "empty history");
    check_finite(h);
    const int t = static_cast<int>(h.size()) - 1;
    switch (rule.kind) {
    case RuleKind::sgd: return h[t];
    case RuleKind::signsgd: return sign_smooth(h[t], rule.eps);
    case RuleKind::momentum: {
        double s = 0.0;
        for (int i = 0; i <= t; ++i)
            s += std::pow(rule.beta, t - i) * h[i];
        return s;
    }
    case RuleKind::adam: {
        const double c1 = 1.0 - std::pow(rule.beta1, t + 1);
        const double c2 = 1.0 - std::pow(rule.beta2, t + 1);
        double m = 0.0, v = 0.0;
        for (int i = 0; i <= t; ++i) {
            const double w1 = (1.0 - rule.beta1) * std::pow(rule.beta1, t - i) / c1;
            const double w2 = (1.0 - rule.beta2) * std::pow(rule.beta2, t - i) / c2;
            m += w1 * h[i];
            v += w2 * h[i] * h[i];
        }
        return m / std::sqrt(v + rule.eps * rule.eps);
    }
    case RuleKind::custom: return rule.custom(h);
    }
    return 0.0;
}

ArrayXXd q_eval(const RuleTable& rules, int layer, const std::vector<ArrayXXd>& history)
{
    if (history.empty())
        throw Error(ErrorCode::InvalidArgument, "empty history");
    const UpdateRule& rule = rules.at(layer);
    const Index rows = history[0].rows(), cols = history[0].cols();
    for (const auto& h : history)
        if (h.rows() != rows || h.cols() != cols)
            throw Error(ErrorCode::DimensionMismatch, "history entries differ in shape");
    ArrayXXd out(rows, cols);
    std::vector<double> buf(history.size());
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) {
            for (size_t s = 0; s < history.size(); ++s)
                buf[s] = history[s](i, j);
            out(i, j) = q_scalar(rule, buf);
        }
    return out;
}

double q_weighted_prefix(const UpdateRule& rule, std::span<const double> h, std::span<const double> w)
{
    const int T = static_cast<int>(h.size());
    double acc = 0.0;
    switch (rule.kind) {
    case RuleKind::sgd:
        for (int s = 0; s < T; ++s)
            acc += w[s] * h[s];
        return acc;
    case RuleKind::signsgd:
        for (int s = 0; s < T; ++s)
            acc += w[s] * sign_smooth(h[s], rule.eps);
        return acc;
    case RuleKind::momentum: {
        double m = 0.0;
        for (int s = 0; s < T; ++s) {
            m = rule.beta * m + h[s];
            acc += w[s] * m;
        }
        return acc;
    }
    case RuleKind::adam: {
        double m = 0.0, v = 0.0;
        const double e2 = rule.eps * rule.eps;
        for (int s = 0; s < T; ++s) {
            double a1, b1, a2, b2;
            ema_coeffs(rule.beta1, s, a1, b1);
            ema_coeffs(rule.beta2, s, a2, b2);
            m = a1 * m + b1 * h[s];
            v = a2 * v + b2 * h[s] * h[s];
            acc += w[s] * m / std::sqrt(v + e2);
        }
        return acc;
    }
    case RuleKind::custom:
        for (int s = 0; s < T; ++s)
            if (w[s] != 0.0)
                acc += w[s] * rule.custom(h.subspan(0, s + 1));
        return acc;
    }
    return acc;
}

ArrayXXd q_weighted_prefix(const UpdateRule& rule, const std::vector<const ArrayXXd*>& h, std::span<const double> w)
{
    if (h.empty())
        throw Error(ErrorCode::InvalidArgument, "empty history");
    const Index rows = h[0]->rows(), cols = h[0]->cols();
    const int T = static_cast<int>(h.size());
    ArrayXXd acc = ArrayXXd::Zero(rows, cols);
    switch (rule.kind) {
    case RuleKind::sgd:
        for (int s = 0; s < T; ++s)
            acc += w[s] * *h[s];
        return acc;
    case RuleKind::signsgd:
        for (int s = 0; s < T; ++s) {
            if (rule.eps == 0.0)
                acc += w[s] * h[s]->sign();
            else
                acc += w[s] * *h[s] / (h[s]->square() + rule.eps * rule.eps).sqrt();
        }
        return acc;
    case RuleKind::momentum: {
        ArrayXXd m = ArrayXXd::Zero(rows, cols);
        for (int s = 0; s < T; ++s) {
            m = rule.beta * m + *h[s];
            acc += w[s] * m;
        }
        return acc;
    }
    case RuleKind::adam: {
        ArrayXXd m = ArrayXXd::Zero(rows, cols), v = ArrayXXd::Zero(rows, cols);
        const double e2 = rule.eps * rule.eps;
        for (int s = 0; s < T; ++s) {
            double a1, b1, a2, b2;
            ema_coeffs(rule.beta1, s, a1, b1);
            ema_coeffs(rule.beta2, s, a2, b2);
            m = a1 * m + b1 * *h[s];
            v = a2 * v + b2 * h[s]->square();
            if (w[s] != 0.0)
                acc += w[s] * m / (v + e2).sqrt();
        }
        return acc;
    }
    case RuleKind::custom: {
        std::vector<double> buf(T), ww(w.begin(), w.end());
        for (Index j = 0; j < cols; ++j)
            for (Index i = 0; i < rows; ++i) {
                for (int s = 0; s < T; ++s)
                    buf[s] = (*h[s])(i, j);
                acc(i, j) = q_weighted_prefix(rule, buf, ww);
            }
        return acc;
    }
    }
    return acc;
}

QState::QState(const UpdateRule& rule, Index rows, Index cols) : rule_(rule)
{
    rule_.check();
    if (rule_.kind == RuleKind::adam || rule_.kind == RuleKind::momentum) {
        m_ = ArrayXXd::Zero(rows, cols);
        if (rule_.kind == RuleKind::adam)
            v_ = ArrayXXd::Zero(rows, cols);
    }
}

const ArrayXXd& QState::push(const ArrayXXd& g)
{
    if (g.hasNaN())
        throw Error(ErrorCode::NaNInHistory, "NaN in gradient");
    switch (rule_.kind) {
    case RuleKind::sgd: out_ = g; break;
    case RuleKind::signsgd:
        if (rule_.eps == 0.0)
            out_ = g.sign();
        else
            out_ = g / (g.square() + rule_.eps * rule_.eps).sqrt();
        break;
    case RuleKind::momentum:
        m_ = rule_.beta * m_ + g;
        out_ = m_;
        break;
    case RuleKind::adam: {
        double a1, b1, a2, b2;
        ema_coeffs(rule_.beta1, t_, a1, b1);
        ema_coeffs(rule_.beta2, t_, a2, b2);
        m_ = a1 * m_ + b1 * g;
        v_ = a2 * v_ + b2 * g.square();
        out_ = m_ / (v_ + rule_.eps * rule_.eps).sqrt();
        break;
    }
    case RuleKind::custom: {
        hist_.push_back(g);
        out_.resize(g.rows(), g.cols());
        std::vector<double> buf(hist_.size());
        for (Index j = 0; j < g.cols(); ++j)
            for (Index i = 0; i < g.rows(); ++i) {
                for (size_t s = 0; s < hist_.size(); ++s)
                    buf[s] = hist_[s](i, j);
                out_(i, j) = rule_.custom(buf);
            }
        break;
    }
    }
    ++t_;
    return out_;
}

void Modifiers::check() const
{
    if (!(lambda >= 0 && lambda < 1))
        throw Error(ErrorCode::InvalidArgument, "weight decay needs 0 <= lambda < 1");
    if (clip == ClipMode::clip && !(theta0 > 0))
        throw Error(ErrorCode::InvalidArgument, "clipping needs theta0 > 0");
}

ClipMode clip_mode_from(const std::string& s)
{
    if (s == "none") return ClipMode::none;
    if (s == "normalize") return ClipMode::normalize;
    if (s == "clip") return ClipMode::clip;
    throw Error(ErrorCode::InvalidConfig, "unknown clip mode '" + s + "'");
}

NormSource norm_source_from(const std::string& s)
{
    if (s == "update") return NormSource::update;
    if (s == "weight") return NormSource::weight;
    throw Error(ErrorCode::InvalidConfig, "unknown norm source '" + s + "'");
}

std::string to_string(ClipMode m)
{
    switch (m) {
    case ClipMode::none: return "none";
    case ClipMode::normalize: return "normalize";
    case ClipMode::clip: return "clip";
    }
    return "?";
}

std::string to_string(NormSource s) { return s == NormSource::update ? "update" : "weight"; }

double default_clip_exponent(LayerKind kind) { return kind == LayerKind::vector_like ? 0.5 : 1.0; }

double modifier_norm(const ArrayXXd& update, const ArrayXXd& weight, const Modifiers& mods, double n, double e)
{
    if (mods.clip == ClipMode::none)
        return 1.0;
    const ArrayXXd& src = mods.source == NormSource::update ? update : weight;
    double nu = std::sqrt(src.square().sum());
    if (mods.clip == ClipMode::clip)
        nu = std::min(nu, mods.theta0 * std::pow(n, e));
    if (!(nu > 0))
        throw Error(ErrorCode::ZeroNormUpdate, "normalizing by a zero norm");
    return nu;
}

ArrayXXd apply_modifiers(const ArrayXXd& update, const ArrayXXd& weight, const Modifiers& mods, double eta, double c,
                         double n, double e)
{
    if (mods.source == NormSource::weight && mods.clip != ClipMode::none &&
        (weight.rows() != update.rows() || weight.cols() != update.cols()))
        throw Error(ErrorCode::DimensionMismatch, "weight and update shapes differ");
    const double nu = modifier_norm(update, weight, mods, n, e);
    return (-eta * std::pow(n, -c) / nu) * update;
}

ArrayXXd apply_modifiers(const ArrayXXd& update, const ArrayXXd& weight, const Modifiers& mods, double eta, double c,
                         double n, LayerKind kind)
{
    return apply_modifiers(update, weight, mods, eta, c, n, default_clip_exponent(kind));
}

} // namespace tpl
