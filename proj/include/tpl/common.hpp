#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <initializer_list>
#include <functional>

#include <Eigen/Dense>

namespace tpl {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::ArrayXXd;
using Eigen::ArrayXd;

enum class ErrorCode {
    UndefinedSymbol,
    DuplicateSymbol,
    ArityMismatch,
    KindMismatch,
    MissingPartial,
    NotAVector,
    EmptyOutputs,
    ZeroWidth,
    NumericalOverflow,
    Diverged,
    NaNInHistory,
    ZeroNormUpdate,
    CovarianceError,
    DimensionMismatch,
    UnknownPreset,
    UnknownFunction,
    InvalidArgument,
    InvalidConfig,
    TooFewPoints,
    Io,
};

const char* error_name(ErrorCode c);

// true for failures that come from the numbers rather than the inputs
bool is_numerical(ErrorCode c);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

// splitmix64 finalizer, used to derive independent stream keys
inline std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> tags)
{
    std::uint64_t k = mix64(seed);
    for (auto t : tags)
        k = mix64(k ^ mix64(t + 0x632be59bd9b4e019ULL));
    return k;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags)
{
    return Rng(stream_key(seed, tags));
}

inline void fill_normal(double* p, Index count, Rng& rng)
{
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Index i = 0; i < count; ++i)
        p[i] = nd(rng);
}

inline MatrixXd normal_matrix(Index rows, Index cols, Rng& rng)
{
    MatrixXd m(rows, cols);
    fill_normal(m.data(), m.size(), rng);
    return m;
}

// Runs fn(i) for i in [0, count) on up to `threads` workers (0 = hardware concurrency).
// The first exception thrown by any task is rethrown after all workers stop.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

int default_threads();

} // namespace tpl
