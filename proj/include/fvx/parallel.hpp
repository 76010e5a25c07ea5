#pragma once

#include <cstddef>
#include <memory>

#include <tbb/blocked_range.h>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>

namespace fvx {

// Sets the worker count for all library passes while alive. n <= 0 keeps the TBB default.
class ThreadScope {
public:
    explicit ThreadScope(int n) {
        if (n > 0)
            ctl_ = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism,
                                                         static_cast<std::size_t>(n));
    }

private:
    std::unique_ptr<tbb::global_control> ctl_;
};

// Every pass writes only to slots owned by its index, so results do not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, F&& fn) {
    if (n == 0) return;
    tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n), [&](const tbb::blocked_range<std::size_t>& r) {
        for (std::size_t i = r.begin(); i != r.end(); ++i) fn(i);
    });
}

} // namespace fvx
