#pragma once

// Central finite-difference gradient oracle (h = 1e-5, double precision),
// independent of the reverse-mode path it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "vlmforge/tensor.hpp"

namespace gradcheck {

using vlmforge::core::Tape;
using vlmforge::core::Tensor;

struct Result {
    double max_rel_error = 0.0;
    long checked = 0;
};

// loss_fn must rebuild the graph from the current parameter values on every
// call (finite differences perturb the raw data in place).
inline Result check(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& params,
                    double h = 1e-5, double denom_floor = 1e-6) {
    for (const auto& p : params) const_cast<Tensor&>(p).zero_grad();
    {
        Tape tape;
        Tensor loss = loss_fn();
        tape.backward(loss);
    }
    Result res;
    for (const auto& p : params) {
        auto data = const_cast<Tensor&>(p).mutable_data();
        const auto grad = p.grad();
        for (size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + h;
            const double up = loss_fn().value();
            data[i] = saved - h;
            const double down = loss_fn().value();
            data[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double ad = grad[i];
            const double denom = std::max({std::abs(fd), std::abs(ad), denom_floor});
            res.max_rel_error = std::max(res.max_rel_error, std::abs(fd - ad) / denom);
            ++res.checked;
        }
    }
    return res;
}

}  // namespace gradcheck
