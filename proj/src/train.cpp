#include "ps/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "ps/errors.hpp"
#include "ps/metrics.hpp"
#include "ps/parallel.hpp"
#include "ps/prior.hpp"
#include "ps/rng.hpp"

namespace fs = std::filesystem;

namespace ps {

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.batch = 4;
    c.j_train = 8;
    c.epochs = 125;
    c.lr_halve_every = 25;
    c.crops_per_scene = 8;
    c.max_steps = 2000;
    return c;
}

void TrainConfig::validate() const {
    arch.validate();
    if (lr <= 0 || lr_halve_every <= 0 || batch <= 0 || epochs < 0 || j_train <= 0 || crop <= 0)
        throw ConfigError("train config: all quantities must be positive");
    if (crop % 4 != 0) throw ConfigError("train config: crop must be divisible by 4");
    if (scene_size < crop) throw ConfigError("train config: scene_size must be >= crop");
}

namespace {

ObservationStack crop_stack(const ObservationStack& stack, int x0, int y0, int size) {
    ObservationStack out;
    out.width = size;
    out.height = size;
    out.lights = stack.lights;
    out.mask.assign(static_cast<std::size_t>(size) * size, 0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            out.mask[static_cast<std::size_t>(y) * size + x] =
                stack.mask[static_cast<std::size_t>(y0 + y) * stack.width + (x0 + x)];
    const std::int64_t src_hw = static_cast<std::int64_t>(stack.width) * stack.height;
    const std::int64_t dst_hw = static_cast<std::int64_t>(size) * size;
    for (const TensorF& img : stack.images) {
        TensorF crop({3, size, size});
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    crop[c * dst_hw + static_cast<std::int64_t>(y) * size + x] =
                        img[c * src_hw + static_cast<std::int64_t>(y0 + y) * stack.width +
                            (x0 + x)];
        out.images.push_back(std::move(crop));
    }
    return out;
}

NormalMap crop_normals(const NormalMap& nm, int x0, int y0, int size) {
    NormalMap out = NormalMap::zeros(size, size);
    const std::int64_t src_hw = nm.pixels();
    const std::int64_t dst_hw = out.pixels();
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const std::int64_t src = static_cast<std::int64_t>(y0 + y) * nm.width + (x0 + x);
            const std::int64_t dst = static_cast<std::int64_t>(y) * size + x;
            out.mask[static_cast<std::size_t>(dst)] = nm.mask[static_cast<std::size_t>(src)];
            for (int c = 0; c < 3; ++c) out.n[c * dst_hw + dst] = nm.n[c * src_hw + src];
        }
    return out;
}

struct SceneDraw {
    Scene scene;
    LightSet lights;
    RenderFlags flags;
};

SceneDraw draw_scene(const TrainConfig& cfg, Rng& rng, int index) {
    SceneParams p;
    p.width = cfg.scene_size;
    p.height = cfg.scene_size;
    for (int c = 0; c < 3; ++c)
        p.albedo[static_cast<std::size_t>(c)] = static_cast<float>(rng.uniform(0.9, 2.8));
    p.rho_s = static_cast<float>(rng.uniform(0.15, 0.5));
    p.shininess = static_cast<float>(rng.uniform(16.0, 96.0));
    p.blob_count = 4 + static_cast<int>(rng.below(5));

    SceneKind kind = SceneKind::blob;
    if (index % 4 == 2) kind = SceneKind::sphere;
    if (index % 4 == 3) kind = SceneKind::bowl;

    SceneDraw d;
    d.scene = make_scene(kind, p, rng.next_u64());
    d.lights = sample_lights(cfg.j_train, rng.next_u64());
    d.flags.cast_shadows = true;
    d.flags.noise_sigma = 0.005;
    d.flags.noise_seed = rng.next_u64();
    return d;
}

}  // namespace

std::vector<Sample> make_dataset(int n_scenes, const TrainConfig& cfg, std::uint64_t seed) {
    if (n_scenes < 1) throw ArityError("make_dataset: need at least one scene");
    cfg.validate();
    Rng master(seed);
    std::vector<Sample> out;
    for (int s = 0; s < n_scenes; ++s) {
        Rng rng = master.fork(static_cast<std::uint64_t>(s) + 1);
        SceneDraw d = draw_scene(cfg, rng, s);
        RenderResult r = render_stack(d.scene, d.lights, Brdf::blinn_phong, d.flags);
        for (int k = 0; k < cfg.crops_per_scene; ++k) {
            const int x0 = static_cast<int>(rng.below(
                static_cast<std::uint64_t>(cfg.scene_size - cfg.crop + 1)));
            const int y0 = static_cast<int>(rng.below(
                static_cast<std::uint64_t>(cfg.scene_size - cfg.crop + 1)));
            Sample sample;
            sample.stack = crop_stack(r.stack, x0, y0, cfg.crop);
            sample.gt = crop_normals(r.gt, x0, y0, cfg.crop);
            sample.prior = solve_prior(sample.stack).normals;
            out.push_back(std::move(sample));
        }
    }
    return out;
}

std::vector<Sample> make_validation(int n_scenes, const TrainConfig& cfg, std::uint64_t seed) {
    if (n_scenes < 1) throw ArityError("make_validation: need at least one scene");
    cfg.validate();
    Rng master(seed);
    std::vector<Sample> out;
    for (int s = 0; s < n_scenes; ++s) {
        Rng rng = master.fork(static_cast<std::uint64_t>(s) + 1);
        SceneDraw d = draw_scene(cfg, rng, s);
        RenderResult r = render_stack(d.scene, d.lights, Brdf::blinn_phong, d.flags);
        Sample sample;
        sample.stack = std::move(r.stack);
        sample.gt = std::move(r.gt);
        sample.prior = solve_prior(sample.stack).normals;
        out.push_back(std::move(sample));
    }
    return out;
}

double lr_at_epoch(const TrainConfig& cfg, int epoch_index) {
    return cfg.lr * std::pow(0.5, epoch_index / cfg.lr_halve_every);
}

double cosine_loss_value(const NormalMap& pred, const NormalMap& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw DimensionError("cosine_loss_value: size mismatch");
    const std::int64_t hw = pred.pixels();
    double acc = 0.0;
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < hw; ++i) {
        if (!gt.mask[static_cast<std::size_t>(i)]) continue;
        acc += 1.0 - (static_cast<double>(pred.n[i]) * gt.n[i] +
                      static_cast<double>(pred.n[hw + i]) * gt.n[hw + i] +
                      static_cast<double>(pred.n[2 * hw + i]) * gt.n[2 * hw + i]);
        count++;
    }
    if (count == 0) throw EvalError("cosine_loss_value: empty mask");
    return acc / static_cast<double>(count);
}

namespace {

struct ItemResult {
    NamedTensors<float> grads;
    double loss = 0;
    double mae_deg = 0;
};

ItemResult run_item(const Sample& sample, const ModelParams<float>& params) {
    ItemResult res;
    ParamNodes<float> pn = make_param_nodes<float>(params, true);
    const std::vector<TensorF> inputs = build_inputs(sample.stack, sample.prior);
    auto pred = forward_graph<float>(inputs, sample.prior.n, pn, params.cfg);
    auto loss = ag::cosine_loss<float>(pred, sample.gt.n, sample.gt.mask);
    res.loss = loss->value.data[0];
    ag::backward(loss);
    for (std::size_t i = 0; i < pn.nodes.size(); ++i) {
        const auto& node = pn.nodes[i];
        res.grads.add(params.tensors.names[i],
                      node->grad.data.empty() ? TensorF(node->value.shape) : node->grad);
    }
    NormalMap pm = NormalMap::zeros(sample.gt.width, sample.gt.height);
    pm.n = pred->value;
    pm.mask = sample.gt.mask;
    res.mae_deg = mae(angular_error_map(pm, sample.gt));
    return res;
}

double validation_mae(const std::vector<Sample>& val, const ModelParams<float>& params,
                      int threads) {
    if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
    double acc = 0.0;
    for (const Sample& s : val) {
        NormalMap pred = infer(s.stack, s.prior, params, threads);
        acc += mae(angular_error_map(pred, s.gt));
    }
    return acc / static_cast<double>(val.size());
}

std::string checkpoint_name(const std::string& dir, int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_epoch_%03d.lpsn", epoch);
    return (fs::path(dir) / buf).string();
}

}  // namespace

TrainResult train(const std::vector<Sample>& data, const std::vector<Sample>& val,
                  const TrainConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    if (data.empty()) throw ArityError("train: empty dataset");
    const bool keep_files = !out_dir.empty();
    if (keep_files) fs::create_directories(out_dir);

    TrainResult result;
    result.params = init_params(cfg.arch, cfg.seed);
    result.best_val_mae = std::numeric_limits<double>::infinity();
    AdamState<float> adam;
    AdamHyper hyper;
    Rng shuffler(cfg.seed ^ 0x5deece66dULL);

    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    bool stop = false;
    for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        hyper.lr = lr_at_epoch(cfg, epoch);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffler.below(i)]);

        double epoch_loss = 0, epoch_mae = 0;
        std::int64_t batches = 0;
        for (std::size_t start = 0; start < order.size() && !stop; start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            const std::size_t n_items = end - start;
            std::vector<ItemResult> items(n_items);
            parallel_for(static_cast<std::int64_t>(n_items), cfg.threads, [&](std::int64_t k) {
                items[static_cast<std::size_t>(k)] =
                    run_item(data[static_cast<std::size_t>(order[start + static_cast<std::size_t>(k)])],
                             result.params);
            });

            // Deterministic reduction: item order, then parameter order.
            NamedTensors<float> grads;
            double loss = 0, mae_deg = 0;
            const float inv = 1.0f / static_cast<float>(n_items);
            for (std::size_t i = 0; i < result.params.tensors.size(); ++i)
                grads.add(result.params.tensors.names[i],
                          TensorF(result.params.tensors.tensors[i].shape));
            for (std::size_t k = 0; k < n_items; ++k) {
                const ItemResult& it = items[k];
                loss += it.loss;
                mae_deg += it.mae_deg;
                for (std::size_t i = 0; i < grads.size(); ++i) {
                    float* dst = grads.tensors[i].ptr();
                    const float* src = it.grads.tensors[i].ptr();
                    for (std::int64_t j = 0; j < grads.tensors[i].numel(); ++j)
                        dst[j] += src[j] * inv;
                }
            }
            loss /= static_cast<double>(n_items);
            mae_deg /= static_cast<double>(n_items);
            if (!std::isfinite(loss))
                throw TrainingError("train: non-finite loss at step " +
                                    std::to_string(result.steps + 1) +
                                    (result.last_checkpoint.empty()
                                         ? std::string()
                                         : "; last good checkpoint: " + result.last_checkpoint));

            adam_step(result.params.tensors, grads, adam, hyper);
            result.steps++;
            epoch_loss += loss;
            epoch_mae += mae_deg;
            batches++;
            if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) stop = true;
        }

        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.lr = hyper.lr;
        stats.train_loss = batches ? epoch_loss / static_cast<double>(batches) : 0.0;
        stats.train_mae = batches ? epoch_mae / static_cast<double>(batches) : 0.0;
        stats.val_mae = validation_mae(val, result.params, cfg.threads);
        result.history.push_back(stats);

        if (keep_files) {
            const std::string path = checkpoint_name(out_dir, stats.epoch);
            save_checkpoint(result.params, path);
            result.last_checkpoint = path;
        }
        if (!val.empty() && stats.val_mae < result.best_val_mae) {
            result.best_val_mae = stats.val_mae;
            result.best = result.params;
            if (keep_files)
                save_checkpoint(result.params, (fs::path(out_dir) / "ckpt_best.lpsn").string());
        }
        if (cfg.target_train_mae > 0 && stats.train_mae < cfg.target_train_mae) stop = true;
    }

    if (val.empty()) result.best = result.params;
    if (keep_files) {
        save_checkpoint(result.params, (fs::path(out_dir) / "ckpt_last.lpsn").string());
        if (result.last_checkpoint.empty())
            result.last_checkpoint = (fs::path(out_dir) / "ckpt_last.lpsn").string();
        write_history_csv(result.history, (fs::path(out_dir) / "history.csv").string());
    }
    return result;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    os << "epoch,lr,train_loss,val_mae\n";
    os.precision(10);
    for (const EpochStats& e : history) {
        os << e.epoch << "," << e.lr << "," << e.train_loss << ",";
        if (std::isfinite(e.val_mae)) os << e.val_mae;
        os << "\n";
    }
}

TrainConfig train_config_from_kv(const std::map<std::string, std::string>& kv) {
    TrainConfig cfg;
    auto geti = [&](const char* key, int def) {
        auto it = kv.find(key);
        return it == kv.end() ? def : std::stoi(it->second);
    };
    auto getd = [&](const char* key, double def) {
        auto it = kv.find(key);
        return it == kv.end() ? def : std::stod(it->second);
    };
    auto getb = [&](const char* key, bool def) {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigError(std::string(key) + ": expected true/false");
    };

    if (auto it = kv.find("preset"); it != kv.end()) {
        if (it->second == "desk")
            cfg = TrainConfig::desk();
        else if (it->second == "paper")
            cfg.arch = ArchConfig::paper();
        else
            throw ConfigError("unknown preset: " + it->second);
    }
    cfg.lr = getd("lr", cfg.lr);
    cfg.lr_halve_every = geti("lr_halve_every", cfg.lr_halve_every);
    cfg.batch = geti("batch", cfg.batch);
    cfg.epochs = geti("epochs", cfg.epochs);
    cfg.j_train = geti("j_train", cfg.j_train);
    cfg.crop = geti("crop", cfg.crop);
    cfg.seed = static_cast<std::uint64_t>(getd("seed", static_cast<double>(cfg.seed)));
    cfg.scene_size = geti("scene_size", cfg.scene_size);
    cfg.crops_per_scene = geti("crops_per_scene", cfg.crops_per_scene);
    cfg.val_scenes = geti("val_scenes", cfg.val_scenes);
    cfg.max_steps = geti("max_steps", cfg.max_steps);
    cfg.target_train_mae = getd("target_train_mae", cfg.target_train_mae);
    cfg.arch.base_width = geti("base_width", cfg.arch.base_width);
    cfg.arch.residual = getb("residual", cfg.arch.residual);
    cfg.arch.prior_branch = getb("prior_branch", cfg.arch.prior_branch);
    cfg.arch.concat_after_deconv = geti("concat_after_deconv", cfg.arch.concat_after_deconv);
    cfg.arch.slope = static_cast<float>(getd("slope", cfg.arch.slope));
    cfg.validate();
    return cfg;
}

}  // namespace ps
