#include "tpl/rational.hpp"
#include "tpl/common.hpp"

#include <charconv>
#include <cmath>
#include <numeric>

namespace tpl {

namespace {

std::int64_t checked(__int128 v)
{
    if (v > INT64_MAX || v < INT64_MIN)
        throw Error(ErrorCode::InvalidArgument, "rational overflow");
    return static_cast<std::int64_t>(v);
}

std::int64_t parse_int(std::string_view s)
{
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw Error(ErrorCode::InvalidArgument, "not a rational: '" + std::string(s) + "'");
    return v;
}

} // namespace

Rational::Rational(std::int64_t n, std::int64_t d)
{
    if (d == 0)
        throw Error(ErrorCode::InvalidArgument, "zero denominator");
    if (d < 0) {
        n = -n;
        d = -d;
    }
    std::int64_t g = std::gcd(n < 0 ? -n : n, d);
    if (g == 0)
        g = 1;
    num_ = n / g;
    den_ = d / g;
}

Rational Rational::parse(std::string_view s)
{
    while (!s.empty() && s.front() == ' ')
        s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ')
        s.remove_suffix(1);
    auto slash = s.find('/');
    if (slash != std::string_view::npos)
        return Rational(parse_int(s.substr(0, slash)), parse_int(s.substr(slash + 1)));
    auto dot = s.find('.');
    if (dot == std::string_view::npos)
        return Rational(parse_int(s));
    // finite decimal
    std::string digits(s.substr(0, dot));
    std::string frac(s.substr(dot + 1));
    if (frac.size() > 15)
        throw Error(ErrorCode::InvalidArgument, "too many decimals: '" + std::string(s) + "'");
    bool neg = !digits.empty() && digits[0] == '-';
    std::int64_t den = 1;
    for (size_t i = 0; i < frac.size(); ++i)
        den *= 10;
    std::int64_t ip = digits.empty() || digits == "-" || digits == "+" ? 0 : parse_int(digits);
    std::int64_t fp = frac.empty() ? 0 : parse_int(frac);
    std::int64_t n = (ip < 0 ? -ip : ip) * den + fp;
    return Rational(neg ? -n : n, den);
}

std::string Rational::str() const
{
    if (den_ == 1)
        return std::to_string(num_);
    return std::to_string(num_) + "/" + std::to_string(den_);
}

Rational& Rational::operator+=(const Rational& o)
{
    __int128 n = static_cast<__int128>(num_) * o.den_ + static_cast<__int128>(o.num_) * den_;
    __int128 d = static_cast<__int128>(den_) * o.den_;
    __int128 a = n < 0 ? -n : n, b = d;
    while (b != 0) {
        __int128 t = a % b;
        a = b;
        b = t;
    }
    if (a == 0)
        a = 1;
    *this = Rational(checked(n / a), checked(d / a));
    return *this;
}

Rational& Rational::operator*=(const Rational& o)
{
    std::int64_t g1 = std::gcd(num_ < 0 ? -num_ : num_, o.den_);
    std::int64_t g2 = std::gcd(o.num_ < 0 ? -o.num_ : o.num_, den_);
    if (g1 == 0) g1 = 1;
    if (g2 == 0) g2 = 1;
    __int128 n = static_cast<__int128>(num_ / g1) * (o.num_ / g2);
    __int128 d = static_cast<__int128>(den_ / g2) * (o.den_ / g1);
    *this = Rational(checked(n), checked(d));
    return *this;
}

Rational& Rational::operator/=(const Rational& o)
{
    if (o.num_ == 0)
        throw Error(ErrorCode::InvalidArgument, "division by zero");
    return *this *= Rational(o.den_, o.num_);
}

bool operator<(const Rational& a, const Rational& b)
{
    return static_cast<__int128>(a.num_) * b.den_ < static_cast<__int128>(b.num_) * a.den_;
}

Rational min(const Rational& a, const Rational& b) { return b < a ? b : a; }

} // namespace tpl
