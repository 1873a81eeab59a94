#pragma once

#include "sodkit/checkpoint.hpp"
#include "sodkit/losses.hpp"
#include "sodkit/metrics.hpp"
#include "sodkit/synth.hpp"

namespace sodkit {

// Full run configuration: model hyper-parameters plus the training schedule.
// Loaded from a flat key=value file; every key can be overridden on the CLI.
struct RunConfig {
    ModelConfig model;
    int batch = 8;
    int epochs = 60;
    int halve_every = 20;  // epochs between learning-rate halvings
    double lr_encoder = 3e-4;
    double lr_branch = 3e-4;
    double lr_decoder = 3e-3;  // 10x the encoder/branch rate by default
    std::uint64_t seed = 1;
    int train_size = 800;  // first N seeds of the 0..799 training range
    int val_size = 100;    // first N seeds of the 800..899 validation range
    std::filesystem::path out_dir = "runs/default";

    void validate() const;
};

// Applies one key=value pair; unknown key or bad value -> ConfigError.
void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value);
// Parses a flat key=value file ('#' comments, blank lines allowed).
void load_config_file(RunConfig& cfg, const std::filesystem::path& path);
// Resolves out_dir against $SODKIT_OUT_ROOT when it is relative.
std::filesystem::path resolve_out_dir(const RunConfig& cfg);

// One assembled training batch.
struct Batch {
    Value img;                 // [B,3,S,S]
    std::vector<double> mask;  // B*S*S, binary
    Shape mask_shape;          // [B,1,S,S]
};

Batch assemble_batch(const std::vector<Sample>& samples);

// Deterministic sample order of one epoch (epochs count from 1).
std::vector<int> epoch_order(std::uint64_t run_seed, int epoch, int n);
// Deterministic augmentation seed of batch element i at (epoch, step).
std::uint64_t augment_seed(std::uint64_t run_seed, int epoch, int step, int i);

// Forward + loss; fills the breakdown (lg/stages/ll/total) when given.
Value run_loss(Network& net, const Batch& batch, bool train, LossBreakdown* bd = nullptr);

struct TrainResult {
    int best_epoch = 0;
    double best_val_mae = 0.0;  // stage-1 P2 validation MAE at the best epoch
    std::filesystem::path best_ckpt, init_ckpt, loss_csv, val_csv;
};

// Full deterministic training run. Writes loss.csv (per step), val.csv (per
// epoch), init.ckpt, best.ckpt and best.json under the resolved out_dir.
TrainResult train(const RunConfig& cfg);

// Loads the checkpoint, runs inference over a split ("train" or "val"),
// writes per-image predictions and the metric report under out_dir.
MetricReport eval_split(const RunConfig& cfg, const std::filesystem::path& ckpt,
                        const std::string& split, const std::filesystem::path& out_dir);

// Single-image inference: bilinear resize to the model side, forward, shuffle
// the stage-1 refined prediction to full resolution, bilinear resize back to
// the source size, write an 8-bit grayscale map.
void infer(const RunConfig& cfg, const std::filesystem::path& ckpt,
           const std::filesystem::path& image_path, const std::filesystem::path& out_path);

// Trains encoder + global branch on the patch-grid loss only, over `nsamples`
// fixed samples, up to `max_steps` optimizer steps. Returns the final mean
// patch loss over the sample set (evaluation mode).
double branch_overfit(const ModelConfig& model, std::uint64_t seed, int nsamples,
                      int max_steps, double target);

}  // namespace sodkit
