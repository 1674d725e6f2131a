#include "ps/adam.hpp"

#include <cmath>

#include "ps/errors.hpp"

namespace ps {

template <typename T>
void adam_step(NamedTensors<T>& params, const NamedTensors<T>& grads, AdamState<T>& state,
               const AdamHyper& hyper) {
    if (params.size() != grads.size())
        throw DimensionError("adam_step: parameter/gradient count mismatch");
    if (state.m.empty()) {
        for (const auto& t : params.tensors) {
            state.m.emplace_back(t.shape);
            state.v.emplace_back(t.shape);
        }
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = params.tensors[i];
        const Tensor<T>& g = grads.at(params.names[i]);
        if (!p.same_shape(g))
            throw DimensionError("adam_step: gradient shape mismatch for " + params.names[i]);
        Tensor<T>& m = state.m[i];
        Tensor<T>& v = state.v[i];
        const T b1 = static_cast<T>(hyper.beta1), b2 = static_cast<T>(hyper.beta2);
        for (std::int64_t j = 0; j < p.numel(); ++j) {
            const T gj = g[j];
            if (!std::isfinite(static_cast<double>(gj)))
                throw TrainingError("adam_step: non-finite gradient in " + params.names[i]);
            m[j] = b1 * m[j] + (T(1) - b1) * gj;
            v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
            const double mhat = static_cast<double>(m[j]) / bc1;
            const double vhat = static_cast<double>(v[j]) / bc2;
            p[j] -= static_cast<T>(hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps));
        }
    }
}

template void adam_step<float>(NamedTensors<float>&, const NamedTensors<float>&,
                               AdamState<float>&, const AdamHyper&);
template void adam_step<double>(NamedTensors<double>&, const NamedTensors<double>&,
                                AdamState<double>&, const AdamHyper&);

}  // namespace ps
