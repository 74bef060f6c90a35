#pragma once

#include <functional>
#include <vector>

#include "scrawl/tape.hpp"
#include "scrawl/tensor.hpp"

namespace scrawl {

// Central-difference check of the analytic gradient. `f` rebuilds the forward
// pass from scratch on every call (fresh tape, same inputs) and returns a
// scalar. Meant for 64-bit elements; relative error uses the denominator
// max(|analytic|, |numeric|, 1e-8).
template <typename T>
double finite_diff_check(const std::function<TensorT<T>(TapeT<T>&, std::vector<TensorT<T>>&)>& f,
                         std::vector<TensorT<T>> inputs, T eps = T(1e-5)) {
    TapeT<T> tape;
    TensorT<T> loss = f(tape, inputs);
    if (loss.numel() != 1) throw std::runtime_error("finite_diff_check: f must be scalar-valued");
    for (auto& t : inputs) t.zero_grad();
    tape.backward(loss);

    auto eval = [&]() {
        TapeT<T> t2;
        t2.set_recording(false);
        return f(t2, inputs).item();
    };

    double max_rel = 0.0;
    for (auto& t : inputs) {
        if (!t.requires_grad()) continue;
        for (size_t i = 0; i < t.numel(); ++i) {
            const T saved = t.data()[i];
            t.data()[i] = saved + eps;
            const double fp = eval();
            t.data()[i] = saved - eps;
            const double fm = eval();
            t.data()[i] = saved;
            const double numeric = (fp - fm) / (2.0 * static_cast<double>(eps));
            const double analytic = static_cast<double>(t.grad()[i]);
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace scrawl
