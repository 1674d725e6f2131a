#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ps/adam.hpp"
#include "ps/normal_map.hpp"
#include "ps/ops.hpp"
#include "ps/render.hpp"

namespace ps {

/// Architecture knobs. The desk preset (base_width 16) trains on a CPU;
/// the paper preset (base_width 128) fuses 512 feature channels.
/// Ablation variants: prior_branch=false drops the normal branch and every
/// prior injection; residual=false uses plain blocks without shortcuts;
/// concat_after_deconv selects where the prior re-enters the regressor
/// (2 = after the second deconv, 3 = after the third, 0 = nowhere).
struct ArchConfig {
    int base_width = 16;
    bool residual = true;
    bool prior_branch = true;
    int concat_after_deconv = 2;
    float slope = 0.1f;

    static ArchConfig desk() { return {}; }
    static ArchConfig paper() {
        ArchConfig c;
        c.base_width = 128;
        return c;
    }

    void validate() const;
    int psi_channels() const { return 4 * base_width; }
    // Prior injections exist only when the prior branch does.
    int effective_concat() const { return prior_branch ? concat_after_deconv : 0; }

    bool operator==(const ArchConfig&) const = default;
};

struct ConvSpec {
    std::string name;  // parameter prefix; weights at name+".w", bias ".b"
    int cin = 0, cout = 0, k = 3, stride = 1, pad = 1;
    bool transposed = false;
};

/// Every convolution in the model, in construction order.
std::vector<ConvSpec> layer_plan(const ArchConfig& cfg);

template <typename T>
struct ModelParams {
    ArchConfig cfg;
    NamedTensors<T> tensors;

    template <typename U>
    ModelParams<U> cast() const {
        ModelParams<U> out;
        out.cfg = cfg;
        for (std::size_t i = 0; i < tensors.size(); ++i)
            out.tensors.add(tensors.names[i], tensors.tensors[i].template cast<U>());
        return out;
    }
};

/// Kaiming-style fan-in normal init for weights, zero biases.
ModelParams<float> init_params(const ArchConfig& cfg, std::uint64_t seed);

std::int64_t param_count(const ArchConfig& cfg);

/// Per-light fusion input: channels 0-2 prior normal, 3-5 image,
/// 6-8 the unit light direction broadcast across the frame.
std::vector<TensorF> build_inputs(const ObservationStack& stack, const NormalMap& prior);

template <typename T>
struct ParamNodes {
    std::vector<ag::NodePtr<T>> nodes;  // aligned with ModelParams order
    std::unordered_map<std::string, int> index;

    const ag::NodePtr<T>& at(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("unknown parameter: " + name);
        return nodes[static_cast<std::size_t>(it->second)];
    }
};

template <typename T>
ParamNodes<T> make_param_nodes(const ModelParams<T>& params, bool requires_grad);

/// Two-branch feature extraction of one fusion input. phi: [9,H,W] with H,W
/// divisible by 4; output [4*base_width, H/4, W/4].
template <typename T>
ag::NodePtr<T> extract_features(const ag::NodePtr<T>& phi, const ParamNodes<T>& pn,
                                const ArchConfig& cfg);

/// Order-invariant max fusion of per-light features.
template <typename T>
ag::NodePtr<T> fuse(const std::vector<ag::NodePtr<T>>& features);

/// Regression head: six convs, three deconvs, prior re-injection, L2
/// normalization. psi at (H/4, W/4); output unit normals at (H, W).
template <typename T>
ag::NodePtr<T> regress(const ag::NodePtr<T>& psi, const Tensor<T>& prior,
                       const ParamNodes<T>& pn, const ArchConfig& cfg);

/// Full differentiable pipeline over J lights.
template <typename T>
ag::NodePtr<T> forward_graph(const std::vector<Tensor<T>>& inputs, const Tensor<T>& prior,
                             const ParamNodes<T>& pn, const ArchConfig& cfg);

/// Inference convenience: no gradient recording, per-light work split over
/// `threads`, result independent of the thread count.
NormalMap infer(const ObservationStack& stack, const NormalMap& prior,
                const ModelParams<float>& params, int threads = 1);

// ---- checkpoint file --------------------------------------------------------
// "LPSN", version u16, ArchConfig, then per tensor: name, rank, dims (u32),
// float32 little-endian payload. Bit-exact round trip.

void save_checkpoint(const ModelParams<float>& params, const std::string& path);
ModelParams<float> load_checkpoint(const std::string& path);

#define PS_DECLARE_NET(T)                                                                      \
    extern template ParamNodes<T> make_param_nodes<T>(const ModelParams<T>&, bool);           \
    extern template ag::NodePtr<T> extract_features<T>(const ag::NodePtr<T>&,                 \
                                                       const ParamNodes<T>&,                  \
                                                       const ArchConfig&);                    \
    extern template ag::NodePtr<T> fuse<T>(const std::vector<ag::NodePtr<T>>&);               \
    extern template ag::NodePtr<T> regress<T>(const ag::NodePtr<T>&, const Tensor<T>&,        \
                                              const ParamNodes<T>&, const ArchConfig&);       \
    extern template ag::NodePtr<T> forward_graph<T>(const std::vector<Tensor<T>>&,            \
                                                    const Tensor<T>&, const ParamNodes<T>&,   \
                                                    const ArchConfig&);

PS_DECLARE_NET(float)
PS_DECLARE_NET(double)
#undef PS_DECLARE_NET

}  // namespace ps
