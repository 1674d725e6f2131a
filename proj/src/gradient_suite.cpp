#include <cmath>

#include "ps/gradcheck.hpp"
#include "ps/net.hpp"
#include "ps/ops.hpp"

namespace ps {

namespace {

using ag::NodePtr;

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                             double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Random values bounded away from zero (keeps finite differences off the
// leaky-ReLU kink).
Tensor<double> random_offset_tensor(std::vector<int> shape, Rng& rng, double margin = 0.1) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) {
        const double u = rng.uniform(-1.0, 1.0);
        v = u >= 0 ? u + margin : u - margin;
    }
    return t;
}

Tensor<double> probe_weights(const std::vector<int>& shape, Rng& rng) {
    return random_tensor(shape, rng);
}

GradSuiteEntry run_check(const std::string& name, const GraphBuilder& build,
                         const NamedTensors<double>& leaves, Rng& rng, double tol,
                         std::int64_t max_coords = 64, double retry_tol = 0.0) {
    GradSuiteEntry e;
    e.name = name;
    e.tolerance = tol;
    e.report = check_gradients(build, leaves, 1e-5, max_coords, rng, retry_tol);
    e.pass = e.report.pass(tol);
    return e;
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed) {
    std::vector<GradSuiteEntry> out;
    Rng rng(seed);
    constexpr double kOpTol = 1e-4;

    {  // conv2d, stride 1
        NamedTensors<double> leaves;
        leaves.add("x", random_tensor({4, 5, 5}, rng));
        leaves.add("w", random_tensor({2, 4, 3, 3}, rng));
        leaves.add("b", random_tensor({2}, rng));
        auto probe = probe_weights({2, 5, 5}, rng);
        out.push_back(run_check(
            "conv2d s1",
            [probe](const std::vector<NodePtr<double>>& l) {
                return ag::weighted_sum<double>(ag::conv2d<double>(l[0], l[1], l[2], 1, 1), probe);
            },
            leaves, rng, kOpTol));
    }
    {  // conv2d, stride 2
        NamedTensors<double> leaves;
        leaves.add("x", random_tensor({3, 8, 8}, rng));
        leaves.add("w", random_tensor({2, 3, 3, 3}, rng));
        leaves.add("b", random_tensor({2}, rng));
        auto probe = probe_weights({2, 4, 4}, rng);
        out.push_back(run_check(
            "conv2d s2",
            [probe](const std::vector<NodePtr<double>>& l) {
                return ag::weighted_sum<double>(ag::conv2d<double>(l[0], l[1], l[2], 2, 1), probe);
            },
            leaves, rng, kOpTol));
    }
    {  // transposed conv
        NamedTensors<double> leaves;
        leaves.add("x", random_tensor({3, 4, 4}, rng));
        leaves.add("w", random_tensor({3, 2, 4, 4}, rng));
        leaves.add("b", random_tensor({2}, rng));
        auto probe = probe_weights({2, 8, 8}, rng);
        out.push_back(run_check(
            "deconv2d",
            [probe](const std::vector<NodePtr<double>>& l) {
                return ag::weighted_sum<double>(ag::deconv2d<double>(l[0], l[1], l[2]), probe);
            },
            leaves, rng, kOpTol));
    }
    {  // leaky_relu (inputs bounded away from the kink)
        NamedTensors<double> leaves;
        leaves.add("x", random_offset_tensor({3, 4, 4}, rng));
        auto probe = probe_weights({3, 4, 4}, rng);
        out.push_back(run_check(
            "leaky_relu",
            [probe](const std::vector<NodePtr<double>>& l) {
                return ag::weighted_sum<double>(ag::leaky_relu<double>(l[0], 0.1), probe);
            },
            leaves, rng, kOpTol));
    }
    {  // max over a set, ties avoided
        NamedTensors<double> leaves;
        Tensor<double> a = random_tensor({2, 3, 3}, rng);
        Tensor<double> b = a, c = a;
        for (std::int64_t i = 0; i < a.numel(); ++i) {
            b[i] += (i % 2 == 0) ? 0.5 : -0.5;  // clear winners everywhere
            c[i] += (i % 3 == 0) ? 1.0 : -1.0;
        }
        leaves.add("a", a);
        leaves.add("b", b);
        leaves.add("c", c);
        auto probe = probe_weights({2, 3, 3}, rng);
        out.push_back(run_check(
            "max_over_set",
            [probe](const std::vector<NodePtr<double>>& l) {
                return ag::weighted_sum<double>(ag::max_over_set<double>({l[0], l[1], l[2]}),
                                                probe);
            },
            leaves, rng, kOpTol));
    }
    {  // per-pixel L2 normalization
        NamedTensors<double> leaves;
        leaves.add("x", random_offset_tensor({3, 4, 4}, rng, 0.2));
        auto probe = probe_weights({3, 4, 4}, rng);
        out.push_back(run_check(
            "l2_normalize",
            [probe](const std::vector<NodePtr<double>>& l) {
                return ag::weighted_sum<double>(ag::l2_normalize_channels<double>(l[0], 1e-12),
                                                probe);
            },
            leaves, rng, kOpTol));
    }
    {  // concat + slice routing
        NamedTensors<double> leaves;
        leaves.add("a", random_tensor({2, 4, 4}, rng));
        leaves.add("b", random_tensor({3, 4, 4}, rng));
        auto probe = probe_weights({3, 4, 4}, rng);
        out.push_back(run_check(
            "concat/slice",
            [probe](const std::vector<NodePtr<double>>& l) {
                auto cat = ag::concat_channels<double>({l[0], l[1]});
                return ag::weighted_sum<double>(ag::slice_channels<double>(cat, 1, 4), probe);
            },
            leaves, rng, kOpTol));
    }
    {  // add (residual shortcut)
        NamedTensors<double> leaves;
        leaves.add("a", random_tensor({2, 3, 3}, rng));
        leaves.add("b", random_tensor({2, 3, 3}, rng));
        auto probe = probe_weights({2, 3, 3}, rng);
        out.push_back(run_check(
            "add",
            [probe](const std::vector<NodePtr<double>>& l) {
                return ag::weighted_sum<double>(ag::add<double>(l[0], l[1]), probe);
            },
            leaves, rng, kOpTol));
    }
    {  // cosine loss through the normalization layer
        NamedTensors<double> leaves;
        leaves.add("x", random_offset_tensor({3, 4, 4}, rng, 0.2));
        Tensor<double> gt = random_offset_tensor({3, 4, 4}, rng, 0.2);
        const std::int64_t hw = 16;
        for (std::int64_t i = 0; i < hw; ++i) {
            const double n = std::sqrt(gt[i] * gt[i] + gt[hw + i] * gt[hw + i] +
                                       gt[2 * hw + i] * gt[2 * hw + i]);
            gt[i] /= n;
            gt[hw + i] /= n;
            gt[2 * hw + i] /= n;
        }
        std::vector<std::uint8_t> mask(16, 1);
        mask[3] = 0;  // a hole keeps the masked path honest
        out.push_back(run_check(
            "cosine_loss",
            [gt, mask](const std::vector<NodePtr<double>>& l) {
                return ag::cosine_loss<double>(ag::l2_normalize_channels<double>(l[0], 1e-12), gt,
                                               mask);
            },
            leaves, rng, kOpTol));
    }
    {  // the full desk-scale model, end to end
        const ArchConfig cfg = ArchConfig::desk();
        ModelParams<double> params = init_params(cfg, seed ^ 0xabcddcba).cast<double>();

        const int h = 8, w = 8, J = 2;
        std::vector<Tensor<double>> inputs;
        for (int j = 0; j < J; ++j) inputs.push_back(random_tensor({9, h, w}, rng, 0.0, 1.0));
        Tensor<double> prior = random_offset_tensor({3, h, w}, rng, 0.2);
        Tensor<double> gt = random_offset_tensor({3, h, w}, rng, 0.2);
        const std::int64_t hw = h * w;
        for (std::int64_t i = 0; i < hw; ++i) {
            const double n = std::sqrt(gt[i] * gt[i] + gt[hw + i] * gt[hw + i] +
                                       gt[2 * hw + i] * gt[2 * hw + i]);
            gt[i] /= n;
            gt[hw + i] /= n;
            gt[2 * hw + i] /= n;
        }
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(hw), 1);

        GraphBuilder build = [&, inputs, prior, gt, mask,
                              cfg](const std::vector<NodePtr<double>>& l) {
            ParamNodes<double> pn;
            pn.nodes = l;
            for (std::size_t i = 0; i < params.tensors.size(); ++i)
                pn.index[params.tensors.names[i]] = static_cast<int>(i);
            auto pred = forward_graph<double>(inputs, prior, pn, cfg);
            return ag::cosine_loss<double>(pred, gt, mask);
        };
        GradSuiteEntry e;
        e.name = "network end-to-end";
        e.tolerance = 1e-3;
        e.report = check_gradients(build, params.tensors, 1e-5, 5, rng, 1e-3);
        e.pass = e.report.pass(e.tolerance);
        out.push_back(e);
    }
    return out;
}

}  // namespace ps
