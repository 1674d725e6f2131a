#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ps/net.hpp"
#include "ps/normal_map.hpp"
#include "ps/render.hpp"

namespace ps {

struct TrainConfig {
    double lr = 0.002;
    int lr_halve_every = 5;  // epochs
    int batch = 24;
    int epochs = 40;
    int j_train = 32;
    int crop = 32;
    std::uint64_t seed = 0;
    ArchConfig arch;

    // synthetic dataset assembly
    int scene_size = 64;
    int crops_per_scene = 8;
    int val_scenes = 0;

    // run control
    int max_steps = 0;            // 0 = no cap
    double target_train_mae = 0;  // early stop below this epoch-mean MAE (degrees); 0 = off
    int threads = 1;

    /// CPU-sized preset used by the demo pipeline: smaller batches and
    /// fewer observations, a slower halving schedule, same architecture
    /// defaults (base_width 16).
    static TrainConfig desk();

    void validate() const;
};

/// One training example. The prior is solved from exactly the observations
/// that feed the network (crops carry their own solve).
struct Sample {
    ObservationStack stack;
    NormalMap gt;
    NormalMap prior;
};

/// Synthetic Blinn-Phong scenes (blob/sphere/bowl mix, random material and
/// upper-hemisphere lights, cast shadows, mild noise), cropped to
/// cfg.crop with per-crop priors. Deterministic per seed.
std::vector<Sample> make_dataset(int n_scenes, const TrainConfig& cfg, std::uint64_t seed);

/// Full-frame samples for validation (no cropping).
std::vector<Sample> make_validation(int n_scenes, const TrainConfig& cfg, std::uint64_t seed);

/// Step schedule: lr halves every lr_halve_every epochs (0-based index).
double lr_at_epoch(const TrainConfig& cfg, int epoch_index);

/// Plain (non-differentiable) masked cosine loss, for reporting.
double cosine_loss_value(const NormalMap& pred, const NormalMap& gt);

struct EpochStats {
    int epoch = 0;  // 1-based in history/CSV
    double lr = 0;
    double train_loss = 0;
    double train_mae = 0;  // degrees, batch-mean over the epoch
    double val_mae = 0;    // degrees; NaN when no validation set
};

struct TrainResult {
    ModelParams<float> params;
    ModelParams<float> best;  // lowest validation MAE (final params without validation)
    std::vector<EpochStats> history;
    std::int64_t steps = 0;
    double best_val_mae = 0;
    std::string last_checkpoint;
};

/// Adam training with the halving schedule. Writes per-epoch checkpoints
/// and history.csv under out_dir (pass "" to skip files). A non-finite
/// loss aborts with the last good checkpoint named in the error.
TrainResult train(const std::vector<Sample>& data, const std::vector<Sample>& val,
                  const TrainConfig& cfg, const std::string& out_dir);

/// CSV rows: epoch, lr, train_loss, val_mae.
void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

TrainConfig train_config_from_kv(const std::map<std::string, std::string>& kv);

}  // namespace ps
