#include "tpl/activation.hpp"
#include "tpl/common.hpp"

#include <cmath>

namespace tpl {

namespace {

const std::vector<std::string> kNames = {"identity", "relu", "srelu", "softplus", "gelu", "tanh"};

constexpr double kSharp = 4.0;

double softplus(double x) { return x > 30 ? x : (x < -30 ? std::exp(x) : std::log1p(std::exp(x))); }
double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

} // namespace

Activation Activation::named(const std::string& name)
{
    for (size_t i = 0; i < kNames.size(); ++i)
        if (kNames[i] == name)
            return Activation(static_cast<Kind>(i));
    throw Error(ErrorCode::UnknownFunction, "unknown activation '" + name + "'");
}

std::vector<std::string> Activation::names() { return kNames; }

const std::string& Activation::name() const { return kNames[static_cast<size_t>(kind_)]; }

double Activation::f(double x) const
{
    switch (kind_) {
    case Kind::identity: return x;
    case Kind::relu: return x > 0 ? x : 0.0;
    case Kind::srelu: return softplus(kSharp * x) / kSharp;
    case Kind::softplus: return softplus(x);
    case Kind::gelu: return x * 0.5 * std::erfc(-x * kInvSqrt2);
    case Kind::tanh: return std::tanh(x);
    }
    return x;
}

double Activation::df(double x) const
{
    switch (kind_) {
    case Kind::identity: return 1.0;
    case Kind::relu: return x > 0 ? 1.0 : 0.0;
    case Kind::srelu: return sigmoid(kSharp * x);
    case Kind::softplus: return sigmoid(x);
    case Kind::gelu: return 0.5 * std::erfc(-x * kInvSqrt2) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
    case Kind::tanh: {
        double t = std::tanh(x);
        return 1.0 - t * t;
    }
    }
    return 1.0;
}

double Activation::d2f(double x) const
{
    switch (kind_) {
    case Kind::identity: return 0.0;
    case Kind::relu: return 0.0;
    case Kind::srelu: {
        double s = sigmoid(kSharp * x);
        return kSharp * s * (1.0 - s);
    }
    case Kind::softplus: {
        double s = sigmoid(x);
        return s * (1.0 - s);
    }
    case Kind::gelu: return kInvSqrt2Pi * std::exp(-0.5 * x * x) * (2.0 - x * x);
    case Kind::tanh: {
        double t = std::tanh(x);
        return -2.0 * t * (1.0 - t * t);
    }
    }
    return 0.0;
}

} // namespace tpl
