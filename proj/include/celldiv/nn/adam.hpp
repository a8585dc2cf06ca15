#pragma once

#include <cmath>
#include <vector>

#include "celldiv/nn/unet.hpp"

namespace celldiv::nn {

struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update of `params` from their accumulated gradients.
template <typename T>
void adam_step(std::vector<Param<T>>& params, AdamState& s) {
    if (s.m.size() != params.size()) {
        s.m.assign(params.size(), {});
        s.v.assign(params.size(), {});
        for (std::size_t i = 0; i < params.size(); ++i) {
            s.m[i].assign(params[i].size(), 0.0);
            s.v[i].assign(params[i].size(), 0.0);
        }
    }
    ++s.step;
    const double c1 = 1.0 - std::pow(s.beta1, double(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, double(s.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (s.m[i].size() != p.size()) fail(ErrorKind::shape_mismatch, "Adam moments do not match parameter " + p.name);
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = double(p.grad[j]);
            double& m = s.m[i][j];
            double& v = s.v[i][j];
            m = s.beta1 * m + (1.0 - s.beta1) * g;
            v = s.beta2 * v + (1.0 - s.beta2) * g * g;
            const double mhat = m / c1, vhat = v / c2;
            p.value[j] = T(double(p.value[j]) - s.lr * mhat / (std::sqrt(vhat) + s.eps));
        }
    }
}

} // namespace celldiv::nn
