#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dppp/image.hpp"
#include "dppp/prompt_forge.hpp"

namespace dppp::synth {

class GridError : public Error {
public:
    using Error::Error;
};
class AssetError : public Error {
public:
    using Error::Error;
};
class BackendContractError : public Error {
public:
    using Error::Error;
};
class SegmentationError : public Error {
public:
    using Error::Error;
};
class LightingMismatchError : public Error {
public:
    using Error::Error;
};
class EmptyDatasetError : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    GenerationError(const std::string& msg, bool retryable_flag)
        : Error(msg), retryable(retryable_flag) {}
    bool retryable;
};

// cols x rows cells, each cell_width x cell_height pixels; the canvas is the
// exact tiling (no gutters).
struct GridSpec {
    int cols = 6;
    int rows = 7;
    int cell_width = 128;
    int cell_height = 256;

    int cells() const { return cols * rows; }
    int canvas_width() const { return cols * cell_width; }
    int canvas_height() const { return rows * cell_height; }
    void validate() const;
};

GridSpec parse_grid(const std::string& text, int cell_width = 128, int cell_height = 256);

struct ConditioningBundle {
    Image edge_map;               // single channel, canvas sized
    std::vector<Image> pose_maps; // single channel, one per occupied cell, cell sized
};

struct GeneratorMetadata {
    std::string backend_id;
    std::uint64_t seed = 0;
};

struct Canvas {
    int identity_id = 0;
    Image image;
    GeneratorMetadata metadata;
};

struct ImageSample {
    int identity_id = 0;
    int view_index = 0;
    forge::LightingTag lighting = forge::LightingTag::day_sunshine;
    forge::SceneCategory scene = forge::SceneCategory::street;
    Image image;
    std::string source_path;
};

struct Background {
    Image image;
    forge::LightingTag lighting = forge::LightingTag::day_sunshine;
    forge::SceneCategory scene = forge::SceneCategory::street;
};

struct ManifestEntry {
    std::string path;
    int identity_id = 0;
    int view_index = 0;
    forge::LightingTag lighting = forge::LightingTag::day_sunshine;
    forge::SceneCategory scene = forge::SceneCategory::street;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    int num_identities = 0;
    std::map<int, int> counts; // relabeled identity -> sample count

    bool operator==(const DatasetManifest&) const = default;
};

// --- backend clients ---

struct GenerationRequest {
    std::string prompt;
    std::string negative_prompt;
    int width = 0;
    int height = 0;
    const ConditioningBundle* conditioning = nullptr;
    std::uint64_t seed = 0;
    int identity_key = 0;
    std::map<std::string, std::string> options; // opaque backend options (e.g. LoRA picks)
};

class GeneratorClient {
public:
    virtual ~GeneratorClient() = default;
    virtual Image generate(const GenerationRequest& request) = 0;
    virtual std::string backend_id() const = 0;
};

class SegmenterClient {
public:
    virtual ~SegmenterClient() = default;
    virtual Matte segment(const Image& image) = 0;
    virtual std::string backend_id() const = 0;
};

// Deterministic in-process generator. Character canvases are procedurally
// textured per (identity_key, seed) with per-cell view variation; scene
// prompts ("no people") produce backgrounds keyed by the prompt text.
class MockGenerator : public GeneratorClient {
public:
    Image generate(const GenerationRequest& request) override;
    std::string backend_id() const override { return "mock"; }
};

// Fixed centered silhouette matte with a soft edge; constant inputs produce
// an all-zero matte (nothing to segment).
class MockSegmenter : public SegmenterClient {
public:
    Matte segment(const Image& image) override;
    std::string backend_id() const override { return "mock"; }
};

// POST {prompt, negative_prompt, width, height, edge_map, pose_maps, seed,
// options} as JSON with base64 PNG payloads; expects {"image": base64 PNG}.
class HttpGenerator : public GeneratorClient {
public:
    explicit HttpGenerator(const std::string& base_url, int timeout_seconds = 120);
    Image generate(const GenerationRequest& request) override;
    std::string backend_id() const override;

private:
    std::string base_url_;
    int timeout_seconds_;
};

// POST {"image": base64 PNG}; expects {"matte": base64 PNG} (8-bit gray,
// mapped to [0,1]).
class HttpSegmenter : public SegmenterClient {
public:
    explicit HttpSegmenter(const std::string& base_url, int timeout_seconds = 120);
    Matte segment(const Image& image) override;
    std::string backend_id() const override;

private:
    std::string base_url_;
    int timeout_seconds_;
};

std::unique_ptr<GeneratorClient> make_generator(const std::string& backend_spec);
std::unique_ptr<SegmenterClient> make_segmenter(const std::string& backend_spec);

// --- pipeline operations ---

ConditioningBundle build_conditioning(const GridSpec& grid,
                                      const std::vector<Image>& pose_assets);

Canvas synthesize_canvas(const forge::CharacterPrompt& prompt,
                         const ConditioningBundle& conditioning, GeneratorClient& client,
                         std::uint64_t seed);

std::vector<ImageSample> crop_grid(const Canvas& canvas, const GridSpec& grid,
                                   forge::LightingTag lighting);

Matte segment_foreground(const ImageSample& sample, SegmenterClient& segmenter);

ImageSample composite_foreground(const ImageSample& sample, const Matte& matte,
                                 const Background& background);

DatasetManifest build_dataset_manifest(const std::vector<ImageSample>& samples);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

// Filename convention inside a dataset directory: images/{id:05d}_{view:02d}.png
std::string sample_filename(int identity_id, int view_index);

// Scene backgrounds, a handful per lighting condition, generated once per run.
struct BackgroundPool {
    std::map<forge::LightingTag, std::vector<Background>> by_lighting;

    const Background& pick(forge::LightingTag lighting, std::uint64_t key) const;
};

BackgroundPool build_background_pool(GeneratorClient& client, int per_lighting, int width,
                                     int height, std::uint64_t seed);

// Canvas -> crops -> mattes -> composites for one identity. Keeps at most
// `views_per_identity` leading cells (all of them when < 1).
std::vector<ImageSample> synthesize_identity_samples(
    const forge::IdentitySpec& spec, const GridSpec& grid,
    const ConditioningBundle& conditioning, GeneratorClient& generator,
    SegmenterClient& segmenter, const BackgroundPool& backgrounds, std::uint64_t seed,
    int views_per_identity = -1);

} // namespace dppp::synth
