#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "ps/formats.hpp"
#include "ps/gradcheck.hpp"
#include "ps/image_io.hpp"
#include "ps/integrate.hpp"
#include "ps/metrics.hpp"
#include "ps/net.hpp"
#include "ps/parallel.hpp"
#include "ps/prior.hpp"
#include "ps/train.hpp"

namespace fs = std::filesystem;
using namespace ps;

namespace {

SceneParams scene_params_from_kv(const std::map<std::string, std::string>& kv, SceneKind& kind,
                                 double& light_cap_deg) {
    SceneParams p;
    auto geti = [&](const char* key, int def) {
        auto it = kv.find(key);
        return it == kv.end() ? def : std::stoi(it->second);
    };
    auto getd = [&](const char* key, double def) {
        auto it = kv.find(key);
        return it == kv.end() ? def : std::stod(it->second);
    };
    auto it = kv.find("kind");
    kind = scene_kind_from_string(it == kv.end() ? "blob" : it->second);
    p.width = geti("width", p.width);
    p.height = geti("height", p.height);
    p.rim_radius = getd("rim_radius", p.rim_radius);
    p.sphere_radius = getd("sphere_radius", p.sphere_radius);
    p.blob_count = geti("blob_count", p.blob_count);
    p.blob_amp_min = getd("blob_amp_min", p.blob_amp_min);
    p.blob_amp_max = getd("blob_amp_max", p.blob_amp_max);
    p.blob_sigma_min = getd("blob_sigma_min", p.blob_sigma_min);
    p.blob_sigma_max = getd("blob_sigma_max", p.blob_sigma_max);
    p.bowl_radius = getd("bowl_radius", p.bowl_radius);
    p.bowl_depth = getd("bowl_depth", p.bowl_depth);
    p.albedo[0] = static_cast<float>(getd("albedo_r", p.albedo[0]));
    p.albedo[1] = static_cast<float>(getd("albedo_g", p.albedo[1]));
    p.albedo[2] = static_cast<float>(getd("albedo_b", p.albedo[2]));
    p.rho_s = static_cast<float>(getd("rho_s", p.rho_s));
    p.shininess = static_cast<float>(getd("shininess", p.shininess));
    light_cap_deg = getd("light_cap_deg", 90.0);
    return p;
}

NormalMap load_normals_arg(const std::string& path, const std::string& mask_path) {
    if (path.size() > 4 && path.substr(path.size() - 4) == ".txt") {
        if (mask_path.empty())
            throw DataError("text normal maps need --mask to supply the dimensions");
        int w = 0, h = 0;
        auto mask = read_mask_png(mask_path, &w, &h);
        NormalMap nm = read_normal_txt(path, w, h);
        nm.mask = mask;
        nm.apply_mask();
        nm.mask_from_vectors();
        return nm;
    }
    return read_normalmap(path);
}

int cmd_render(const std::string& scene_cfg, int lights, std::uint64_t seed,
               const std::string& out, const std::string& brdf, bool shadows, double noise) {
    SceneKind kind;
    double light_cap = 90.0;
    SceneParams p = scene_params_from_kv(read_kv_file(scene_cfg), kind, light_cap);
    Scene scene = make_scene(kind, p, seed);
    LightSet ls = sample_lights(lights, seed ^ 0x9e3779b9ULL, light_cap);
    RenderFlags flags;
    flags.cast_shadows = shadows;
    flags.noise_sigma = noise;
    flags.noise_seed = seed ^ 0x7f4a7c15ULL;
    const Brdf b = brdf == "blinn" ? Brdf::blinn_phong : Brdf::lambertian;
    RenderResult r = render_stack(scene, ls, b, flags);
    write_dataset(out, r.stack, &r.gt);
    std::printf("rendered %d observations (%dx%d) into %s\n", r.stack.count(), scene.width,
                scene.height, out.c_str());
    return 0;
}

int cmd_prior(const std::string& in, const std::string& out) {
    ObservationStack stack = read_dataset(in);
    PriorResult res = solve_prior(stack);
    write_normalmap(res.normals, out);
    std::printf("condition number %.4f, flagged %lld low-signal pixels\n", res.condition_number,
                static_cast<long long>(res.flagged));
    return 0;
}

int cmd_train(const std::string& config, const std::string& data, const std::string& out,
              int threads) {
    TrainConfig cfg = train_config_from_kv(read_kv_file(config));
    cfg.threads = threads;

    std::vector<std::string> scene_dirs;
    for (const auto& entry : fs::directory_iterator(data))
        if (entry.is_directory()) scene_dirs.push_back(entry.path().string());
    std::sort(scene_dirs.begin(), scene_dirs.end());
    if (scene_dirs.empty()) throw DataError("no scene directories under " + data);
    if (cfg.val_scenes >= static_cast<int>(scene_dirs.size()))
        throw ConfigError("val_scenes must leave at least one training scene");

    Rng rng(cfg.seed ^ 0x51ed270b);
    std::vector<Sample> train_set, val_set;
    const std::size_t n_train = scene_dirs.size() - static_cast<std::size_t>(cfg.val_scenes);
    for (std::size_t s = 0; s < scene_dirs.size(); ++s) {
        std::optional<NormalMap> gt;
        ObservationStack stack = read_dataset(scene_dirs[s], &gt);
        if (!gt) throw DataError(scene_dirs[s] + ": training requires normal.txt ground truth");

        // Restrict to j_train observations (seeded subset, no replacement).
        if (stack.count() > cfg.j_train) {
            std::vector<int> idx(static_cast<std::size_t>(stack.count()));
            std::iota(idx.begin(), idx.end(), 0);
            for (std::size_t i = idx.size(); i > 1; --i)
                std::swap(idx[i - 1], idx[rng.below(i)]);
            idx.resize(static_cast<std::size_t>(cfg.j_train));
            std::sort(idx.begin(), idx.end());
            ObservationStack sub;
            sub.width = stack.width;
            sub.height = stack.height;
            sub.mask = stack.mask;
            for (int j : idx) {
                sub.images.push_back(std::move(stack.images[static_cast<std::size_t>(j)]));
                sub.lights.directions.push_back(stack.lights.directions[static_cast<std::size_t>(j)]);
                sub.lights.intensities.push_back(stack.lights.intensities[static_cast<std::size_t>(j)]);
            }
            stack = std::move(sub);
        }

        if (s < n_train) {
            // Random crops with per-crop priors.
            if (stack.width < cfg.crop || stack.height < cfg.crop)
                throw DataError(scene_dirs[s] + ": smaller than the training crop");
            for (int k = 0; k < cfg.crops_per_scene; ++k) {
                const int x0 = static_cast<int>(rng.below(
                    static_cast<std::uint64_t>(stack.width - cfg.crop + 1)));
                const int y0 = static_cast<int>(rng.below(
                    static_cast<std::uint64_t>(stack.height - cfg.crop + 1)));
                ObservationStack crop;
                crop.width = cfg.crop;
                crop.height = cfg.crop;
                crop.lights = stack.lights;
                crop.mask.assign(static_cast<std::size_t>(cfg.crop) * cfg.crop, 0);
                const std::int64_t shw = static_cast<std::int64_t>(stack.width) * stack.height;
                const std::int64_t chw = static_cast<std::int64_t>(cfg.crop) * cfg.crop;
                for (int y = 0; y < cfg.crop; ++y)
                    for (int x = 0; x < cfg.crop; ++x)
                        crop.mask[static_cast<std::size_t>(y) * cfg.crop + x] =
                            stack.mask[static_cast<std::size_t>(y0 + y) * stack.width + x0 + x];
                for (const TensorF& img : stack.images) {
                    TensorF ci({3, cfg.crop, cfg.crop});
                    for (int c = 0; c < 3; ++c)
                        for (int y = 0; y < cfg.crop; ++y)
                            for (int x = 0; x < cfg.crop; ++x)
                                ci[c * chw + static_cast<std::int64_t>(y) * cfg.crop + x] =
                                    img[c * shw +
                                        static_cast<std::int64_t>(y0 + y) * stack.width + x0 + x];
                    crop.images.push_back(std::move(ci));
                }
                Sample sm;
                sm.stack = std::move(crop);
                sm.gt = NormalMap::zeros(cfg.crop, cfg.crop);
                const std::int64_t ghw = gt->pixels();
                for (int y = 0; y < cfg.crop; ++y)
                    for (int x = 0; x < cfg.crop; ++x) {
                        const std::int64_t src =
                            static_cast<std::int64_t>(y0 + y) * gt->width + x0 + x;
                        const std::int64_t dst = static_cast<std::int64_t>(y) * cfg.crop + x;
                        sm.gt.mask[static_cast<std::size_t>(dst)] =
                            gt->mask[static_cast<std::size_t>(src)];
                        for (int c = 0; c < 3; ++c)
                            sm.gt.n[c * static_cast<std::int64_t>(cfg.crop) * cfg.crop + dst] =
                                gt->n[c * ghw + src];
                    }
                sm.prior = solve_prior(sm.stack).normals;
                train_set.push_back(std::move(sm));
            }
        } else {
            Sample sm;
            sm.stack = std::move(stack);
            sm.gt = std::move(*gt);
            sm.prior = solve_prior(sm.stack).normals;
            val_set.push_back(std::move(sm));
        }
    }

    TrainResult res = train(train_set, val_set, cfg, out);
    std::printf("trained %lld steps over %zu samples; history at %s/history.csv\n",
                static_cast<long long>(res.steps), train_set.size(), out.c_str());
    if (!res.history.empty()) {
        const EpochStats& last = res.history.back();
        std::printf("final epoch %d: train_loss %.6f train_mae %.3f deg", last.epoch,
                    last.train_loss, last.train_mae);
        if (std::isfinite(last.val_mae)) std::printf(" val_mae %.3f deg", last.val_mae);
        std::printf("\n");
    }
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& in, const std::string& prior_path,
              const std::string& out, int threads) {
    ModelParams<float> params = load_checkpoint(ckpt);
    ObservationStack stack = read_dataset(in);
    NormalMap prior;
    if (!prior_path.empty()) {
        prior = read_normalmap(prior_path);
    } else {
        const std::string cache = out + ".prior.fmap";
        if (fs::exists(cache)) {
            prior = read_normalmap(cache);
        } else {
            prior = solve_prior(stack).normals;
            write_normalmap(prior, cache);
        }
    }
    if (prior.width != stack.width || prior.height != stack.height)
        throw DataError("prior dimensions do not match the observations");
    prior.mask = stack.mask;
    NormalMap pred = infer(stack, prior, params, threads);
    pred.apply_mask();
    write_normalmap(pred, out);
    std::printf("inferred normals for %d observations -> %s\n", stack.count(), out.c_str());
    return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             const std::string& mask_path, const std::string& out, double scale_deg) {
    NormalMap pred = load_normals_arg(pred_path, mask_path);
    NormalMap gt = load_normals_arg(gt_path, mask_path);
    if (!mask_path.empty()) {
        int w = 0, h = 0;
        auto mask = read_mask_png(mask_path, &w, &h);
        if (w != gt.width || h != gt.height) throw DataError("--mask size mismatch");
        pred.mask = mask;
        gt.mask = mask;
        gt.mask_from_vectors();  // still drop zero-vector ground truth
    }
    ErrorMap err = angular_error_map(pred, gt);
    const double m = mae(err);
    const double e15 = err_fraction(err, 15.0);
    const double e30 = err_fraction(err, 30.0);

    fs::create_directories(out);
    render_error_png(err, scale_deg, (fs::path(out) / "error.png").string());
    {
        std::ofstream csv(fs::path(out) / "report.csv");
        csv << "mae_deg,err15_pct,err30_pct\n";
        csv.precision(10);
        csv << m << "," << e15 << "," << e30 << "\n";
    }
    {
        std::ofstream txt(fs::path(out) / "report.txt");
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "MAE %.2f deg\n<15 deg %.2f%%\n<30 deg %.2f%%\n", m, e15, e30);
        txt << buf;
    }
    std::printf("MAE %.2f\n<15 deg: %.2f%%  <30 deg: %.2f%%\n", m, e15, e30);
    return 0;
}

int cmd_integrate(const std::string& normals, const std::string& out, const std::string& mesh) {
    NormalMap nm = read_normalmap(normals);
    GradientField g = normals_to_gradients(nm);
    std::vector<float> depth = integrate_gradients(g);
    write_pfm(out, depth, nm.width, nm.height);
    std::printf("depth written to %s\n", out.c_str());
    if (!mesh.empty()) {
        MeshStats st = export_mesh_obj(depth, nm.mask, nm.width, nm.height, mesh);
        std::printf("mesh: %lld vertices, %lld triangles -> %s\n",
                    static_cast<long long>(st.vertices), static_cast<long long>(st.triangles),
                    mesh.c_str());
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    const auto suite = run_gradient_suite(seed);
    bool all_pass = true;
    for (const auto& e : suite) {
        std::printf("%-22s max rel err %.3e (tol %.0e, %lld coords) %s\n", e.name.c_str(),
                    e.report.max_rel_err, e.tolerance,
                    static_cast<long long>(e.report.coords_checked),
                    e.pass ? "PASS" : "FAIL");
        all_pass = all_pass && e.pass;
    }
    if (!all_pass) throw NumericError("gradient check failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"photometric stereo toolkit"};
    app.require_subcommand(1);
    int threads = default_threads();
    app.add_option("--threads", threads, "worker threads (1 = bit-reproducible)");

    // render
    auto* render = app.add_subcommand("render", "synthesize an observation dataset");
    std::string r_scene, r_out, r_brdf = "blinn";
    int r_lights = 16;
    std::uint64_t r_seed = 0;
    bool r_shadows = false;
    double r_noise = 0.0;
    render->add_option("--scene", r_scene, "scene config (key=value)")->required();
    render->add_option("--lights", r_lights, "number of lights")->required();
    render->add_option("--seed", r_seed, "random seed");
    render->add_option("--out", r_out, "output dataset directory")->required();
    render->add_option("--brdf", r_brdf, "lambertian|blinn")
        ->check(CLI::IsMember({"lambertian", "blinn"}));
    render->add_flag("--shadows", r_shadows, "enable cast shadows");
    render->add_option("--noise", r_noise, "Gaussian noise sigma");

    // prior
    auto* prior = app.add_subcommand("prior", "closed-form Lambertian normals");
    std::string p_in, p_out;
    prior->add_option("--in", p_in, "dataset directory")->required();
    prior->add_option("--out", p_out, "output .fmap")->required();

    // train
    auto* train = app.add_subcommand("train", "train the estimator");
    std::string t_config, t_data, t_out;
    train->add_option("--config", t_config, "train config (key=value)")->required();
    train->add_option("--data", t_data, "directory of dataset directories")->required();
    train->add_option("--out", t_out, "checkpoint/history output directory")->required();

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "predict normals with a checkpoint");
    std::string i_ckpt, i_in, i_prior, i_out;
    infer_cmd->add_option("--ckpt", i_ckpt, "checkpoint file")->required();
    infer_cmd->add_option("--in", i_in, "dataset directory")->required();
    infer_cmd->add_option("--prior", i_prior, "prior .fmap (computed and cached if absent)");
    infer_cmd->add_option("--out", i_out, "output .fmap")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "angular error metrics");
    std::string e_pred, e_gt, e_mask, e_out;
    double e_scale = 45.0;
    eval_cmd->add_option("--pred", e_pred, "predicted normals (.fmap or .txt)")->required();
    eval_cmd->add_option("--gt", e_gt, "ground-truth normals (.fmap or .txt)")->required();
    eval_cmd->add_option("--mask", e_mask, "mask PNG (required for .txt inputs)");
    eval_cmd->add_option("--out", e_out, "report directory")->required();
    eval_cmd->add_option("--scale-deg", e_scale, "error map color scale");

    // integrate
    auto* integ = app.add_subcommand("integrate", "normals to depth and mesh");
    std::string g_normals, g_out, g_mesh;
    integ->add_option("--normals", g_normals, "normal map .fmap")->required();
    integ->add_option("--out", g_out, "output depth .pfm")->required();
    integ->add_option("--mesh", g_mesh, "optional output .obj");

    // gradcheck
    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    std::uint64_t c_seed = 7;
    grad->add_option("--seed", c_seed, "random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        if (render->parsed())
            return cmd_render(r_scene, r_lights, r_seed, r_out, r_brdf, r_shadows, r_noise);
        if (prior->parsed()) return cmd_prior(p_in, p_out);
        if (train->parsed()) return cmd_train(t_config, t_data, t_out, threads);
        if (infer_cmd->parsed()) return cmd_infer(i_ckpt, i_in, i_prior, i_out, threads);
        if (eval_cmd->parsed()) return cmd_eval(e_pred, e_gt, e_mask, e_out, e_scale);
        if (integ->parsed()) return cmd_integrate(g_normals, g_out, g_mesh);
        if (grad->parsed()) return cmd_gradcheck(c_seed);
    } catch (const TrainingError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
