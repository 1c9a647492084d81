#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tpl/common.hpp"

namespace tpl {

enum class RuleKind { sgd, momentum, signsgd, adam, custom };

// Scalar update function of a gradient history (g_0, ..., g_t) -> Q_t.
using HistoryFn = std::function<double(std::span<const double>)>;

struct UpdateRule {
    RuleKind kind = RuleKind::sgd;
    double beta = 0.9;   // momentum
    double beta1 = 0.9;  // adam
    double beta2 = 0.999;
    double eps = 1e-8;   // adam, signsgd
    std::string custom_id;
    HistoryFn custom;
    bool custom_memoryless = false;

    static UpdateRule sgd();
    static UpdateRule momentum(double beta);
    static UpdateRule signsgd(double eps);
    static UpdateRule adam(double beta1, double beta2, double eps);
    static UpdateRule make_custom(std::string id, HistoryFn fn, bool memoryless);

    bool memoryless() const;
    std::string name() const;
    void check(bool limit_mode = false) const; // invariants; throws InvalidArgument
};

// Per-layer override table; layers are 1-based (1..L+1).
struct RuleTable {
    UpdateRule base;
    std::map<int, UpdateRule> overrides;

    RuleTable() = default;
    RuleTable(UpdateRule r) : base(std::move(r)) {}
    const UpdateRule& at(int layer) const;
};

// Q_t on one entry's history; pure.
double q_scalar(const UpdateRule& rule, std::span<const double> history);

// Q^l_t entrywise over a history of equally shaped arrays (t = history.size() - 1).
ArrayXXd q_eval(const RuleTable& rules, int layer, const std::vector<ArrayXXd>& history);

// sum_s w[s] * Q_s(history[0..s]) for one entry, s = 0..history.size()-1.
double q_weighted_prefix(const UpdateRule& rule, std::span<const double> history, std::span<const double> w);

// Vectorized q_weighted_prefix: history[s] are equally shaped arrays.
ArrayXXd q_weighted_prefix(const UpdateRule& rule, const std::vector<const ArrayXXd*>& history,
                           std::span<const double> w);

// Streaming evaluation of Q_t for builtin rules, equal to q_eval on the full history up to
// rounding. Custom rules keep the full history.
class QState {
public:
    QState(const UpdateRule& rule, Index rows, Index cols);
    // consumes g_t, returns Q_t(g_0..g_t)
    const ArrayXXd& push(const ArrayXXd& g);
    int steps() const { return t_; }

private:
    UpdateRule rule_;
    int t_ = 0;
    ArrayXXd m_, v_, out_;
    std::vector<ArrayXXd> hist_;
};

enum class ClipMode { none, normalize, clip };
enum class NormSource { update, weight };
enum class LayerKind { vector_like, matrix_like };

struct Modifiers {
    double lambda = 0.0;
    ClipMode clip = ClipMode::none;
    double theta0 = 1.0;
    NormSource source = NormSource::update;

    void check() const;
    bool normalizing() const { return clip != ClipMode::none; }
};

ClipMode clip_mode_from(const std::string& s);
NormSource norm_source_from(const std::string& s);
std::string to_string(ClipMode m);
std::string to_string(NormSource s);

double default_clip_exponent(LayerKind kind);

// nu as used by the update: 1 without normalization; otherwise the Frobenius norm of the update
// (or of the current weight), clipped below at theta0 * n^e when clip mode is `clip`.
double modifier_norm(const ArrayXXd& update, const ArrayXXd& weight, const Modifiers& mods, double n, double e);

// -eta * n^{-c} * update / nu. The (1 - lambda) decay is applied by the caller.
ArrayXXd apply_modifiers(const ArrayXXd& update, const ArrayXXd& weight, const Modifiers& mods, double eta, double c,
                         double n, LayerKind kind);
ArrayXXd apply_modifiers(const ArrayXXd& update, const ArrayXXd& weight, const Modifiers& mods, double eta, double c,
                         double n, double e);

} // namespace tpl
