#pragma once

#include <string>
#include <vector>

namespace tpl {

// Scalar nonlinearity with its first two derivatives.
// Names: identity, relu, srelu (softplus(4x)/4), softplus, gelu, tanh.
class Activation {
public:
    enum class Kind { identity, relu, srelu, softplus, gelu, tanh };

    Activation() = default;
    explicit Activation(Kind k) : kind_(k) {}

    static Activation named(const std::string& name);
    static std::vector<std::string> names();

    const std::string& name() const;
    Kind kind() const { return kind_; }

    double f(double x) const;
    double df(double x) const;
    double d2f(double x) const;

private:
    Kind kind_ = Kind::srelu;
};

} // namespace tpl
