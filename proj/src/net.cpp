#include "ps/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "ps/errors.hpp"
#include "ps/parallel.hpp"
#include "ps/rng.hpp"

namespace ps {

namespace {

struct BlockSpec {
    std::string prefix;
    int cin, cout, stride;
};

// Residual block channel algebra for one branch. Downsampling happens in
// blocks 3 and 5. The normal branch additionally absorbs the image-branch
// features after blocks 2 and 4 (and after 6, before the fuse conv).
std::vector<BlockSpec> branch_blocks(const std::string& branch, int in_ch, int w,
                                     bool cross_concat) {
    const int grow2 = cross_concat ? 2 : 1;  // input widening at the concat points
    std::vector<BlockSpec> blocks;
    blocks.push_back({branch + "1", in_ch, w, 1});
    blocks.push_back({branch + "2", w, w, 1});
    blocks.push_back({branch + "3", w * grow2, 2 * w, 2});
    blocks.push_back({branch + "4", 2 * w, 2 * w, 1});
    blocks.push_back({branch + "5", 2 * w * grow2, 4 * w, 2});
    blocks.push_back({branch + "6", 4 * w, 4 * w, 1});
    return blocks;
}

void append_block(std::vector<ConvSpec>& plan, const BlockSpec& b, bool residual) {
    plan.push_back({b.prefix + ".c1", b.cin, b.cout, 3, b.stride, 1, false});
    plan.push_back({b.prefix + ".c2", b.cout, b.cout, 3, 1, 1, false});
    if (residual && (b.cin != b.cout || b.stride != 1))
        plan.push_back({b.prefix + ".proj", b.cin, b.cout, 1, b.stride, 0, false});
}

}  // namespace

void ArchConfig::validate() const {
    if (base_width < 4 || base_width % 4 != 0)
        throw ConfigError("arch: base_width must be >= 4 and divisible by 4");
    if (concat_after_deconv != 0 && concat_after_deconv != 2 && concat_after_deconv != 3)
        throw ConfigError("arch: concat_after_deconv must be 0 (none), 2 or 3");
    if (!(slope > 0.0f && slope < 1.0f)) throw ConfigError("arch: slope must be in (0,1)");
}

std::vector<ConvSpec> layer_plan(const ArchConfig& cfg) {
    cfg.validate();
    const int w = cfg.base_width;
    std::vector<ConvSpec> plan;

    for (const auto& b : branch_blocks("feat.ib", 6, w, false)) append_block(plan, b, cfg.residual);
    if (cfg.prior_branch)
        for (const auto& b : branch_blocks("feat.nb", 3, w, true))
            append_block(plan, b, cfg.residual);
    const int fuse_in = cfg.prior_branch ? 8 * w : 4 * w;
    plan.push_back({"feat.fuse", fuse_in, 4 * w, 3, 1, 1, false});

    const int ec = cfg.effective_concat();
    plan.push_back({"reg.r1", 4 * w, 4 * w, 3, 1, 1, false});
    plan.push_back({"reg.r2", 4 * w, 2 * w, 3, 1, 1, false});
    plan.push_back({"reg.d1", 2 * w, 2 * w, 4, 2, 1, true});
    plan.push_back({"reg.r3", 2 * w, w, 3, 1, 1, false});
    plan.push_back({"reg.d2", w, w, 4, 2, 1, true});
    plan.push_back({"reg.r4", w + (ec == 2 ? 3 : 0), 2 * w, 3, 2, 1, false});
    plan.push_back({"reg.r5", 2 * w, w, 3, 1, 1, false});
    plan.push_back({"reg.d3", w, w, 4, 2, 1, true});
    plan.push_back({"reg.r6", w + (ec == 3 ? 3 : 0), 3, 3, 1, 1, false});
    return plan;
}

ModelParams<float> init_params(const ArchConfig& cfg, std::uint64_t seed) {
    ModelParams<float> params;
    params.cfg = cfg;
    Rng rng(seed);
    for (const ConvSpec& c : layer_plan(cfg)) {
        const std::vector<int> wshape = c.transposed
                                            ? std::vector<int>{c.cin, c.cout, c.k, c.k}
                                            : std::vector<int>{c.cout, c.cin, c.k, c.k};
        TensorF w(wshape);
        const double std_dev = std::sqrt(2.0 / (static_cast<double>(c.cin) * c.k * c.k));
        for (auto& v : w.data) v = static_cast<float>(rng.normal(0.0, std_dev));
        params.tensors.add(c.name + ".w", std::move(w));
        params.tensors.add(c.name + ".b", TensorF({c.cout}));
    }
    return params;
}

std::int64_t param_count(const ArchConfig& cfg) {
    std::int64_t n = 0;
    for (const ConvSpec& c : layer_plan(cfg))
        n += static_cast<std::int64_t>(c.cin) * c.cout * c.k * c.k + c.cout;
    return n;
}

std::vector<TensorF> build_inputs(const ObservationStack& stack, const NormalMap& prior) {
    if (prior.width != stack.width || prior.height != stack.height)
        throw DimensionError("build_inputs: prior size does not match the stack");
    const int H = stack.height, W = stack.width;
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    std::vector<TensorF> out;
    out.reserve(static_cast<std::size_t>(stack.count()));
    for (int j = 0; j < stack.count(); ++j) {
        const TensorF& img = stack.images[static_cast<std::size_t>(j)];
        if (img.dim(1) != H || img.dim(2) != W)
            throw DimensionError("build_inputs: image size does not match the stack");
        TensorF phi({9, H, W});
        std::memcpy(phi.ptr(), prior.n.ptr(), sizeof(float) * 3 * hw);
        std::memcpy(phi.ptr() + 3 * hw, img.ptr(), sizeof(float) * 3 * hw);
        const Vec3& l = stack.lights.directions[static_cast<std::size_t>(j)];
        const float lv[3] = {static_cast<float>(l.x), static_cast<float>(l.y),
                             static_cast<float>(l.z)};
        for (int c = 0; c < 3; ++c) {
            float* row = phi.ptr() + (6 + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) row[i] = lv[c];
        }
        out.push_back(std::move(phi));
    }
    return out;
}

template <typename T>
ParamNodes<T> make_param_nodes(const ModelParams<T>& params, bool requires_grad) {
    ParamNodes<T> pn;
    pn.nodes.reserve(params.tensors.size());
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        pn.nodes.push_back(ag::make_leaf<T>(params.tensors.tensors[i], requires_grad,
                                            params.tensors.names[i]));
        pn.index[params.tensors.names[i]] = static_cast<int>(i);
    }
    return pn;
}

namespace {

template <typename T>
ag::NodePtr<T> conv_layer(const ag::NodePtr<T>& x, const ParamNodes<T>& pn, const ConvSpec& c) {
    if (c.transposed) return ag::deconv2d<T>(x, pn.at(c.name + ".w"), pn.at(c.name + ".b"));
    return ag::conv2d<T>(x, pn.at(c.name + ".w"), pn.at(c.name + ".b"), c.stride, c.pad);
}

template <typename T>
struct PlanIndex {
    std::vector<ConvSpec> specs;
    std::unordered_map<std::string, int> by_name;

    explicit PlanIndex(const ArchConfig& cfg) : specs(layer_plan(cfg)) {
        for (std::size_t i = 0; i < specs.size(); ++i)
            by_name[specs[i].name] = static_cast<int>(i);
    }
    const ConvSpec& at(const std::string& name) const {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ConfigError("no layer named " + name);
        return specs[static_cast<std::size_t>(it->second)];
    }
};

template <typename T>
ag::NodePtr<T> run_block(const ag::NodePtr<T>& x, const std::string& prefix,
                         const PlanIndex<T>& plan, const ParamNodes<T>& pn,
                         const ArchConfig& cfg) {
    const T slope = static_cast<T>(cfg.slope);
    auto y = ag::leaky_relu<T>(conv_layer<T>(x, pn, plan.at(prefix + ".c1")), slope);
    y = conv_layer<T>(y, pn, plan.at(prefix + ".c2"));
    if (cfg.residual) {
        auto shortcut = plan.by_name.count(prefix + ".proj")
                            ? conv_layer<T>(x, pn, plan.at(prefix + ".proj"))
                            : x;
        y = ag::add<T>(y, shortcut);
    }
    return ag::leaky_relu<T>(y, slope);
}

}  // namespace

template <typename T>
ag::NodePtr<T> extract_features(const ag::NodePtr<T>& phi, const ParamNodes<T>& pn,
                                const ArchConfig& cfg) {
    if (phi->value.rank() != 3 || phi->value.dim(0) != 9)
        throw DimensionError("extract_features: expected [9,H,W] input");
    if (phi->value.dim(1) % 4 != 0 || phi->value.dim(2) % 4 != 0)
        throw DimensionError("extract_features: spatial extents must be divisible by 4");
    const PlanIndex<T> plan(cfg);
    const T slope = static_cast<T>(cfg.slope);

    auto xi = ag::slice_channels<T>(phi, 3, 9);
    auto i2 = run_block<T>(run_block<T>(xi, "feat.ib1", plan, pn, cfg), "feat.ib2", plan, pn, cfg);
    auto i4 = run_block<T>(run_block<T>(i2, "feat.ib3", plan, pn, cfg), "feat.ib4", plan, pn, cfg);
    auto i6 = run_block<T>(run_block<T>(i4, "feat.ib5", plan, pn, cfg), "feat.ib6", plan, pn, cfg);

    ag::NodePtr<T> trunk;
    if (cfg.prior_branch) {
        auto xn = ag::slice_channels<T>(phi, 0, 3);
        auto n2 =
            run_block<T>(run_block<T>(xn, "feat.nb1", plan, pn, cfg), "feat.nb2", plan, pn, cfg);
        auto n4 = ag::concat_channels<T>({n2, i2});
        n4 = run_block<T>(run_block<T>(n4, "feat.nb3", plan, pn, cfg), "feat.nb4", plan, pn, cfg);
        auto n6 = ag::concat_channels<T>({n4, i4});
        n6 = run_block<T>(run_block<T>(n6, "feat.nb5", plan, pn, cfg), "feat.nb6", plan, pn, cfg);
        trunk = ag::concat_channels<T>({n6, i6});
    } else {
        trunk = i6;
    }
    return ag::leaky_relu<T>(conv_layer<T>(trunk, pn, plan.at("feat.fuse")), slope);
}

template <typename T>
ag::NodePtr<T> fuse(const std::vector<ag::NodePtr<T>>& features) {
    return ag::max_over_set<T>(features);
}

template <typename T>
ag::NodePtr<T> regress(const ag::NodePtr<T>& psi, const Tensor<T>& prior, const ParamNodes<T>& pn,
                       const ArchConfig& cfg) {
    const PlanIndex<T> plan(cfg);
    const T slope = static_cast<T>(cfg.slope);
    const int ec = cfg.effective_concat();

    auto x = ag::leaky_relu<T>(conv_layer<T>(psi, pn, plan.at("reg.r1")), slope);
    x = ag::leaky_relu<T>(conv_layer<T>(x, pn, plan.at("reg.r2")), slope);
    x = ag::leaky_relu<T>(conv_layer<T>(x, pn, plan.at("reg.d1")), slope);
    x = ag::leaky_relu<T>(conv_layer<T>(x, pn, plan.at("reg.r3")), slope);
    x = ag::leaky_relu<T>(conv_layer<T>(x, pn, plan.at("reg.d2")), slope);
    if (ec == 2) x = ag::concat_channels<T>({x, ag::make_const<T>(prior)});
    x = ag::leaky_relu<T>(conv_layer<T>(x, pn, plan.at("reg.r4")), slope);
    x = ag::leaky_relu<T>(conv_layer<T>(x, pn, plan.at("reg.r5")), slope);
    x = ag::leaky_relu<T>(conv_layer<T>(x, pn, plan.at("reg.d3")), slope);
    if (ec == 3) x = ag::concat_channels<T>({x, ag::make_const<T>(prior)});
    x = conv_layer<T>(x, pn, plan.at("reg.r6"));
    return ag::l2_normalize_channels<T>(x, static_cast<T>(1e-12));
}

template <typename T>
ag::NodePtr<T> forward_graph(const std::vector<Tensor<T>>& inputs, const Tensor<T>& prior,
                             const ParamNodes<T>& pn, const ArchConfig& cfg) {
    if (inputs.empty()) throw ArityError("forward_graph: need at least one input");
    std::vector<ag::NodePtr<T>> features;
    features.reserve(inputs.size());
    for (const auto& phi : inputs)
        features.push_back(extract_features<T>(ag::make_const<T>(phi), pn, cfg));
    return regress<T>(fuse<T>(features), prior, pn, cfg);
}

NormalMap infer(const ObservationStack& stack, const NormalMap& prior,
                const ModelParams<float>& params, int threads) {
    ag::NoGradGuard guard;
    const std::vector<TensorF> inputs = build_inputs(stack, prior);
    const ParamNodes<float> pn = make_param_nodes<float>(params, false);
    const int J = static_cast<int>(inputs.size());
    const int workers = std::max(1, std::min(threads, J));

    // Per-worker running max over a contiguous light range; partials are
    // folded in worker order. Elementwise max makes the result independent
    // of the split.
    std::vector<TensorF> partial(static_cast<std::size_t>(workers));
    const int chunk = (J + workers - 1) / workers;
    parallel_for(workers, workers, [&](std::int64_t w) {
        const int lo = static_cast<int>(w) * chunk;
        const int hi = std::min(J, lo + chunk);
        TensorF acc;
        for (int j = lo; j < hi; ++j) {
            auto psi = extract_features<float>(ag::make_const<float>(inputs[static_cast<std::size_t>(j)]),
                                               pn, params.cfg);
            if (acc.data.empty()) {
                acc = psi->value;
            } else {
                for (std::size_t i = 0; i < acc.data.size(); ++i)
                    acc.data[i] = std::max(acc.data[i], psi->value.data[i]);
            }
        }
        partial[static_cast<std::size_t>(w)] = std::move(acc);
    });
    TensorF fused;
    for (auto& part : partial) {
        if (part.data.empty()) continue;
        if (fused.data.empty()) {
            fused = std::move(part);
        } else {
            for (std::size_t i = 0; i < fused.data.size(); ++i)
                fused.data[i] = std::max(fused.data[i], part.data[i]);
        }
    }
    for (auto& v : fused.data) v += 0.0f;  // canonicalize -0.0

    auto pred = regress<float>(ag::make_const<float>(fused), prior.n, pn, params.cfg);

    NormalMap out = NormalMap::zeros(stack.width, stack.height);
    out.n = pred->value;
    out.mask = stack.mask;
    return out;
}

void save_checkpoint(const ModelParams<float>& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path);
    auto put_u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
    auto put_u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_f32 = [&](float v) { os.write(reinterpret_cast<const char*>(&v), 4); };

    os.write("LPSN", 4);
    put_u16(1);  // version
    put_u32(static_cast<std::uint32_t>(params.cfg.base_width));
    put_f32(params.cfg.slope);
    os.put(params.cfg.residual ? 1 : 0);
    os.put(params.cfg.prior_branch ? 1 : 0);
    os.put(static_cast<char>(params.cfg.concat_after_deconv));
    put_u32(static_cast<std::uint32_t>(params.tensors.size()));
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        const std::string& name = params.tensors.names[i];
        const TensorF& t = params.tensors.tensors[i];
        put_u32(static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape) put_u32(static_cast<std::uint32_t>(d));
        os.write(reinterpret_cast<const char*>(t.ptr()),
                 static_cast<std::streamsize>(t.data.size() * 4));
    }
    if (!os) throw DataError("checkpoint write failed: " + path);
}

ModelParams<float> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    auto get_u16 = [&]() {
        std::uint16_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 2);
        return v;
    };
    auto get_u32 = [&]() {
        std::uint32_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };

    char magic[4] = {};
    is.read(magic, 4);
    if (std::memcmp(magic, "LPSN", 4) != 0) throw DataError("not a checkpoint file: " + path);
    const std::uint16_t version = get_u16();
    if (version != 1) throw DataError("unsupported checkpoint version");

    ModelParams<float> params;
    params.cfg.base_width = static_cast<int>(get_u32());
    float slope = 0;
    is.read(reinterpret_cast<char*>(&slope), 4);
    params.cfg.slope = slope;
    params.cfg.residual = is.get() != 0;
    params.cfg.prior_branch = is.get() != 0;
    params.cfg.concat_after_deconv = is.get();
    const std::uint32_t count = get_u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = get_u32();
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const std::uint32_t rank = get_u32();
        std::vector<int> shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(get_u32()));
        TensorF t(shape);
        is.read(reinterpret_cast<char*>(t.ptr()),
                static_cast<std::streamsize>(t.data.size() * 4));
        if (!is) throw DataError("truncated checkpoint: " + path);
        params.tensors.add(name, std::move(t));
    }

    // The stored tensors must agree with the architecture they claim.
    const auto plan = layer_plan(params.cfg);
    for (const ConvSpec& c : plan)
        if (!params.tensors.contains(c.name + ".w") || !params.tensors.contains(c.name + ".b"))
            throw DataError("checkpoint is missing layer " + c.name);
    return params;
}

#define PS_INSTANTIATE_NET(T)                                                                  \
    template ParamNodes<T> make_param_nodes<T>(const ModelParams<T>&, bool);                  \
    template ag::NodePtr<T> extract_features<T>(const ag::NodePtr<T>&, const ParamNodes<T>&,  \
                                                const ArchConfig&);                           \
    template ag::NodePtr<T> fuse<T>(const std::vector<ag::NodePtr<T>>&);                      \
    template ag::NodePtr<T> regress<T>(const ag::NodePtr<T>&, const Tensor<T>&,               \
                                       const ParamNodes<T>&, const ArchConfig&);              \
    template ag::NodePtr<T> forward_graph<T>(const std::vector<Tensor<T>>&, const Tensor<T>&, \
                                             const ParamNodes<T>&, const ArchConfig&);

PS_INSTANTIATE_NET(float)
PS_INSTANTIATE_NET(double)
#undef PS_INSTANTIATE_NET

}  // namespace ps
