#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "memseeker/rng.hpp"
#include "memseeker/tensor.hpp"

namespace memseeker {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    long long worst_index = -1;
    std::map<std::string, double> per_param_errors;
};

// Central-difference check of analytic gradients. loss_fn(true) must run a
// full forward/backward and leave gradients in the parameter grad buffers;
// loss_fn(false) evaluates the loss only. Parameters without a grad buffer
// are frozen and skipped. At most max_coords coordinates per tensor are
// sampled (fixed seed), since full sweeps are infeasible.
template <class S>
GradCheckReport grad_check(std::vector<std::pair<std::string, Tensor<S>>>& params,
                           const std::function<S(bool)>& loss_fn, S eps = S(1e-4), int max_coords = 256,
                           uint64_t seed = 0x6eedc0deULL) {
    for (auto& [name, p] : params)
        if (p.has_grad()) p.zero_grad();
    const S base = loss_fn(true);
    if (!std::isfinite(static_cast<double>(base))) throw std::runtime_error("grad_check: non-finite loss");

    GradCheckReport report;
    for (auto& [name, p] : params) {
        if (!p.has_grad()) continue;
        std::vector<S> analytic(p.grad(), p.grad() + p.size());

        const long long n = static_cast<long long>(p.size());
        std::vector<long long> coords;
        if (n <= max_coords) {
            coords.resize(static_cast<size_t>(n));
            for (long long i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            CounterRng rng = CounterRng(seed).child(CounterRng::mix64(std::hash<std::string>{}(name)));
            for (int i = 0; i < max_coords; ++i) coords.push_back(static_cast<long long>(rng.below(static_cast<uint64_t>(n))));
        }

        double worst = 0.0;
        for (long long idx : coords) {
            S saved = p.data()[idx];
            p.data()[idx] = saved + eps;
            const S lp = loss_fn(false);
            p.data()[idx] = saved - eps;
            const S lm = loss_fn(false);
            p.data()[idx] = saved;
            if (!std::isfinite(static_cast<double>(lp)) || !std::isfinite(static_cast<double>(lm)))
                throw std::runtime_error("grad_check: non-finite loss during perturbation");
            const double numeric = (static_cast<double>(lp) - static_cast<double>(lm)) / (2.0 * static_cast<double>(eps));
            const double a = static_cast<double>(analytic[static_cast<size_t>(idx)]);
            const double rel = std::fabs(a - numeric) / (std::fabs(a) + std::fabs(numeric) + 1e-12);
            if (rel > worst) worst = rel;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = name;
                report.worst_index = idx;
            }
        }
        report.per_param_errors[name] = worst;
    }
    return report;
}

}  // namespace memseeker
