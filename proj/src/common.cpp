#include "tpl/common.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tpl {

const char* error_name(ErrorCode c)
{
    switch (c) {
    case ErrorCode::UndefinedSymbol: return "UndefinedSymbol";
    case ErrorCode::DuplicateSymbol: return "DuplicateSymbol";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::MissingPartial: return "MissingPartial";
    case ErrorCode::NotAVector: return "NotAVector";
    case ErrorCode::EmptyOutputs: return "EmptyOutputs";
    case ErrorCode::ZeroWidth: return "ZeroWidth";
    case ErrorCode::NumericalOverflow: return "NumericalOverflow";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::NaNInHistory: return "NaNInHistory";
    case ErrorCode::ZeroNormUpdate: return "ZeroNormUpdate";
    case ErrorCode::CovarianceError: return "CovarianceError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnknownPreset: return "UnknownPreset";
    case ErrorCode::UnknownFunction: return "UnknownFunction";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::Io: return "Io";
    }
    return "Error";
}

bool is_numerical(ErrorCode c)
{
    switch (c) {
    case ErrorCode::NumericalOverflow:
    case ErrorCode::Diverged:
    case ErrorCode::NaNInHistory:
    case ErrorCode::ZeroNormUpdate:
    case ErrorCode::CovarianceError:
        return true;
    default:
        return false;
    }
}

int default_threads()
{
    const unsigned h = std::thread::hardware_concurrency();
    return h == 0 ? 1 : static_cast<int>(h);
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn)
{
    if (threads <= 0)
        threads = default_threads();
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (int i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first;
    std::mutex mu;
    auto work = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= count)
                return;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (first)
                    return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first)
                    first = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int k = 0; k < threads; ++k)
        pool.emplace_back(work);
    for (auto& t : pool)
        t.join();
    if (first)
        std::rethrow_exception(first);
}

} // namespace tpl
