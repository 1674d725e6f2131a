#include "ps/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ps/errors.hpp"

namespace ps {

namespace {

std::vector<ag::NodePtr<double>> make_leaves(const NamedTensors<double>& values, bool with_grad) {
    std::vector<ag::NodePtr<double>> leaves;
    leaves.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        leaves.push_back(ag::make_leaf<double>(values.tensors[i], with_grad, values.names[i]));
    return leaves;
}

double eval_scalar(const GraphBuilder& build, const NamedTensors<double>& values) {
    ag::NoGradGuard guard;
    auto leaves = make_leaves(values, false);
    auto root = build(leaves);
    return root->value.data[0];
}

}  // namespace

GradCheckReport check_gradients(const GraphBuilder& build, const NamedTensors<double>& leaves,
                                double step, std::int64_t max_coords_per_tensor, Rng& rng,
                                double retry_tol) {
    // Analytic pass.
    NamedTensors<double> work = leaves;
    auto nodes = make_leaves(work, true);
    auto root = build(nodes);
    if (root->value.numel() != 1) throw ConfigError("check_gradients: objective must be scalar");
    ag::backward(root);

    GradCheckReport rep;
    for (std::size_t ti = 0; ti < work.size(); ++ti) {
        Tensor<double>& t = work.tensors[ti];
        const Tensor<double>& g = nodes[ti]->grad.data.empty() ? Tensor<double>(t.shape)
                                                               : nodes[ti]->grad;
        std::vector<std::int64_t> coords;
        if (t.numel() <= max_coords_per_tensor) {
            coords.resize(static_cast<std::size_t>(t.numel()));
            for (std::int64_t i = 0; i < t.numel(); ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            for (std::int64_t i = 0; i < max_coords_per_tensor; ++i)
                coords.push_back(static_cast<std::int64_t>(
                    rng.below(static_cast<std::uint64_t>(t.numel()))));
        }
        auto measure = [&](std::int64_t c, double h) {
            const double orig = t[c];
            t[c] = orig + h;
            const double fp = eval_scalar(build, work);
            t[c] = orig - h;
            const double fm = eval_scalar(build, work);
            t[c] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = g[c];
            return std::abs(analytic - numeric) /
                   std::max({1.0, std::abs(analytic), std::abs(numeric)});
        };
        for (std::int64_t c : coords) {
            double rel = measure(c, step);
            if (retry_tol > 0 && rel > retry_tol)
                rel = std::min({rel, measure(c, step / 8.0), measure(c, step / 64.0)});
            rep.coords_checked++;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst = work.names[ti] + "[" + std::to_string(c) + "]";
            }
        }
    }
    return rep;
}

}  // namespace ps
