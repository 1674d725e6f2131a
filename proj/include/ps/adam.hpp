#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ps/tensor.hpp"

namespace ps {

/// Insertion-ordered collection of named tensors. Ordering is part of the
/// contract: checkpoints, optimizer sweeps and gradient reductions all walk
/// it front to back.
template <typename T>
struct NamedTensors {
    std::vector<std::string> names;
    std::vector<Tensor<T>> tensors;
    std::unordered_map<std::string, int> index;

    Tensor<T>& add(const std::string& name, Tensor<T> t) {
        if (index.count(name)) throw ConfigError("duplicate tensor name: " + name);
        index[name] = static_cast<int>(tensors.size());
        names.push_back(name);
        tensors.push_back(std::move(t));
        return tensors.back();
    }

    bool contains(const std::string& name) const { return index.count(name) != 0; }

    Tensor<T>& at(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("unknown tensor name: " + name);
        return tensors[static_cast<std::size_t>(it->second)];
    }
    const Tensor<T>& at(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("unknown tensor name: " + name);
        return tensors[static_cast<std::size_t>(it->second)];
    }

    std::size_t size() const { return tensors.size(); }

    std::int64_t total_elements() const {
        std::int64_t n = 0;
        for (const auto& t : tensors) n += t.numel();
        return n;
    }
};

struct AdamHyper {
    double lr = 0.002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment estimates, allocated to match the parameters on the
/// first step.
template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    std::int64_t t = 0;
};

/// One bias-corrected Adam update, in place. Gradients must align with
/// params name-for-name; a non-finite gradient aborts with the offending
/// parameter named.
template <typename T>
void adam_step(NamedTensors<T>& params, const NamedTensors<T>& grads, AdamState<T>& state,
               const AdamHyper& hyper);

extern template void adam_step<float>(NamedTensors<float>&, const NamedTensors<float>&,
                                      AdamState<float>&, const AdamHyper&);
extern template void adam_step<double>(NamedTensors<double>&, const NamedTensors<double>&,
                                       AdamState<double>&, const AdamHyper&);

}  // namespace ps
