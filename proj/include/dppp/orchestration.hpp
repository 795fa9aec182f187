#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dppp/disentangle.hpp"
#include "dppp/retrieval.hpp"
#include "dppp/synthesis.hpp"

namespace dppp::run {

class ConfigError : public Error {
public:
    using Error::Error;
};
class DependencyError : public Error {
public:
    using Error::Error;
};
class SamplerError : public Error {
public:
    using Error::Error;
};
class CheckpointError : public Error {
public:
    using Error::Error;
};

struct Hyper {
    double tau = 0.07;
    double delta = 0.3;
    double alpha = 0.3;
    double label_smoothing = 0.1;
    int style_tokens = 24; // n
    int style_keep = 6;    // k
    int content_hidden = 512;
    int style_hidden = 2048;
    int batch_p = 8;
    int batch_k = 8;
    int epochs = 20;
    double lr_encoder = 5e-6;
    double lr_new = 5e-5;
    std::vector<int> decay_epochs = {15, 20};
    double decay_factor = 0.1;
    double contrast_lo = 0.5;
    double contrast_hi = 1.5;
};

struct RunConfig {
    std::uint64_t seed = 7;
    std::string backbone = "toy"; // "toy" or "vit-b-16"
    enc::EncoderConfig encoder = enc::EncoderConfig::toy();
    Hyper hyper;

    // forge
    std::string catalog_path; // empty: embedded default catalog
    int forge_count = 50;
    int scenes_per_lighting = 20;

    // synth
    std::string grid = "2x5";
    int cell_width = 128;
    int cell_height = 256;
    std::string generator_backend = "mock";
    std::string segmenter_backend = "mock";
    int synth_parallel = 4;
    int views_per_identity = -1;

    // layout
    std::string workdir = "runs/default";

    void validate() const; // ConfigError naming the offending field

    static RunConfig defaults();
    static RunConfig from_json(const std::string& text);
    std::string to_json() const;

    // Layered load: defaults <- optional file (path arg, else $DPPP_CONFIG).
    static RunConfig load(const std::string& config_path);

    std::filesystem::path forge_dir() const;
    std::filesystem::path dataset_dir() const;
    std::filesystem::path checkpoint_dir() const;
    std::filesystem::path log_dir() const;
};

// Learning-rate decay multiplier for a 1-based epoch: one factor per decay
// boundary that has been reached.
double lr_factor_for_epoch(const Hyper& hyper, int epoch);

// PK sampling: each batch holds exactly P identities x K samples (indices
// into manifest.entries); every identity appears at least once per epoch.
std::vector<std::vector<int>> pk_sample_batches(const synth::DatasetManifest& manifest,
                                                int P, int K, std::uint64_t seed);

// Contrast jitter around the global image mean, clamped to [0, 255].
Image contrast_augment_with(const Image& image, double coefficient);
Image contrast_augment(const Image& image, double lo, double hi, std::uint64_t seed);

// --- training state ---

struct Stage2aState {
    RunConfig config;
    int num_classes = 0;
    std::unique_ptr<enc::VisionTextEncoder> encoder;
    std::unique_ptr<train::PseudoWordModules> modules;
    std::unique_ptr<nn::Adam> optimizer;
    long steps_done = 0;

    train::PseudoWordHyper stage_hyper() const;
};

struct Stage2bState {
    RunConfig config;
    int num_classes = 0;
    std::unique_ptr<enc::VisionTextEncoder> encoder;
    std::unique_ptr<train::PseudoWordModules> modules; // frozen stage-2a weights
    std::unique_ptr<train::DestylizationProjector> projector;
    std::unique_ptr<nn::Linear> classifier;
    std::unique_ptr<nn::Adam> optimizer;
    long steps_done = 0;
    std::uint64_t parent_checkpoint_hash = 0;

    train::DisentangleHyper stage_hyper() const;
};

Stage2aState make_stage2a_state(const RunConfig& config, int num_classes);
Stage2bState make_stage2b_state(const RunConfig& config, const Stage2aState& stage2a);

// In-memory dataset view used by the trainers.
struct LoadedDataset {
    synth::DatasetManifest manifest;
    std::vector<Image> images; // aligned with manifest.entries
};

LoadedDataset load_dataset(const std::filesystem::path& root);

int batches_per_epoch(const synth::DatasetManifest& manifest, int P);

using StepSink = std::function<void(const std::string& stage, int epoch, long step,
                                    const train::LossReport&)>;

// Advance training to `target_steps` total steps (idempotent re-derivation of
// the batch schedule makes save/resume bit-exact).
void train_stage2a(Stage2aState& state, const LoadedDataset& data, long target_steps,
                   const StepSink& sink = nullptr);
void train_stage2b(Stage2bState& state, const LoadedDataset& data, long target_steps,
                   const StepSink& sink = nullptr);

// --- checkpoints ---

void save_stage2a_checkpoint(const Stage2aState& state, const std::filesystem::path& path);
Stage2aState load_stage2a_checkpoint(const std::filesystem::path& path);
void save_stage2b_checkpoint(const Stage2bState& state, const std::filesystem::path& path);
Stage2bState load_stage2b_checkpoint(const std::filesystem::path& path);

// --- stages (CLI entry points) ---

void run_forge(const RunConfig& config);
void run_synth(const RunConfig& config, const std::string& specs_path = "");
void run_train_stage2a(const RunConfig& config, const std::string& data_dir = "");
void run_train_stage2b(const RunConfig& config, const std::string& data_dir = "");

struct EvalOptions {
    std::string query_dir;
    std::string gallery_dir;
    std::string checkpoint;
    std::string report_path;
    long histogram_pairs = 10000;
    int histogram_bins = 50;
};
eval::EvalReport run_eval(const RunConfig& config, const EvalOptions& options);

void run_plot(const std::string& report_json_path, const std::string& svg_out_path);

} // namespace dppp::run
