#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "dppp/orchestration.hpp"
#include "dppp/toydata.hpp"

using namespace dppp;
using namespace dppp::run;
namespace fs = std::filesystem;

namespace {

// Small-but-real config for fast training tests.
RunConfig tiny_config(const std::string& workdir) {
    RunConfig c;
    c.seed = 11;
    c.workdir = workdir;
    c.encoder = enc::EncoderConfig::toy();
    c.encoder.image_width = 64;
    c.encoder.image_height = 128;
    c.encoder.patch_size = 32; // m = 8
    c.encoder.d1 = 16;
    c.encoder.d2 = 32;
    c.encoder.dt = 16;
    c.encoder.vision_heads = 2;
    c.encoder.text_heads = 2;
    c.hyper.batch_p = 2;
    c.hyper.batch_k = 2;
    c.hyper.epochs = 1;
    c.hyper.decay_epochs = {1};
    c.hyper.style_tokens = 4;
    c.hyper.style_keep = 2;
    c.hyper.content_hidden = 16;
    c.hyper.style_hidden = 16;
    c.hyper.lr_encoder = 1e-4;
    c.hyper.lr_new = 1e-3;
    c.forge_count = 6;
    c.scenes_per_lighting = 2;
    c.grid = "2x2";
    c.cell_width = 64;
    c.cell_height = 128;
    c.views_per_identity = 4;
    return c;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("dppp_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

synth::DatasetManifest tiny_manifest(int ids, int views) {
    std::vector<synth::ImageSample> samples;
    for (int id = 0; id < ids; ++id) {
        for (int v = 0; v < views; ++v) {
            synth::ImageSample s;
            s.identity_id = id;
            s.view_index = v;
            samples.push_back(std::move(s));
        }
    }
    return synth::build_dataset_manifest(samples);
}

LoadedDataset tiny_dataset(const RunConfig& config, int ids, int views) {
    auto data = toy::build_toy_dataset(ids, views, config.seed);
    LoadedDataset out;
    out.manifest = std::move(data.manifest);
    out.images = std::move(data.images);
    return out;
}

} // namespace

TEST_CASE("lr schedule decays at the documented epochs") {
    Hyper h; // decay at 15 and 20 by 0.1
    CHECK(lr_factor_for_epoch(h, 1) == doctest::Approx(1.0));
    CHECK(lr_factor_for_epoch(h, 14) == doctest::Approx(1.0));
    CHECK(lr_factor_for_epoch(h, 15) == doctest::Approx(0.1));
    CHECK(lr_factor_for_epoch(h, 16) == doctest::Approx(0.1));
    CHECK(lr_factor_for_epoch(h, 19) == doctest::Approx(0.1));
    CHECK(lr_factor_for_epoch(h, 20) == doctest::Approx(0.01));
}

TEST_CASE("pk batches have exactly P x K entries and cover every identity") {
    const auto manifest = tiny_manifest(19, 3);
    const auto batches = pk_sample_batches(manifest, 8, 8, 5);
    CHECK(batches.size() == 3); // ceil(19/8)
    std::set<int> seen;
    for (const auto& batch : batches) {
        CHECK(batch.size() == 64);
        std::set<int> ids_in_batch;
        for (const int idx : batch) {
            ids_in_batch.insert(manifest.entries[static_cast<std::size_t>(idx)].identity_id);
            seen.insert(manifest.entries[static_cast<std::size_t>(idx)].identity_id);
        }
        CHECK(ids_in_batch.size() == 8);
    }
    CHECK(seen.size() == 19);
}

TEST_CASE("pk sampling degenerate case: all samples in one batch") {
    const auto manifest = tiny_manifest(2, 2);
    const auto batches = pk_sample_batches(manifest, 2, 2, 1);
    REQUIRE(batches.size() == 1);
    std::multiset<int> idx(batches[0].begin(), batches[0].end());
    CHECK(idx == std::multiset<int>({0, 1, 2, 3}));
}

TEST_CASE("pk sampling is deterministic per seed and errors on too few identities") {
    const auto manifest = tiny_manifest(9, 4);
    CHECK(pk_sample_batches(manifest, 4, 3, 7) == pk_sample_batches(manifest, 4, 3, 7));
    CHECK(pk_sample_batches(manifest, 4, 3, 7) != pk_sample_batches(manifest, 4, 3, 8));
    CHECK_THROWS_AS(pk_sample_batches(manifest, 10, 2, 1), SamplerError);
}

TEST_CASE("pk sampling draws with replacement below K") {
    const auto manifest = tiny_manifest(4, 2); // 2 images per id, K = 5
    const auto batches = pk_sample_batches(manifest, 2, 5, 3);
    for (const auto& batch : batches) {
        CHECK(batch.size() == 10);
    }
}

TEST_CASE("contrast augmentation closed forms") {
    Image img(2, 1, 3);
    for (int c = 0; c < 3; ++c) {
        img.at(0, 0, c) = 100;
        img.at(1, 0, c) = 200;
    }
    const auto id = contrast_augment_with(img, 1.0);
    CHECK(id == img);

    const auto half = contrast_augment_with(img, 0.5);
    for (int c = 0; c < 3; ++c) {
        CHECK(half.at(0, 0, c) == 125);
        CHECK(half.at(1, 0, c) == 175);
    }

    Image gray(4, 4, 3, 77);
    CHECK(contrast_augment_with(gray, 0.5) == gray);
    CHECK(contrast_augment_with(gray, 1.5) == gray);

    CHECK_THROWS_AS(contrast_augment(img, 1.5, 0.5, 1), RangeError);
    CHECK(contrast_augment(img, 0.5, 1.5, 9) == contrast_augment(img, 0.5, 1.5, 9));
}

TEST_CASE("config validation names the offending field") {
    RunConfig c = tiny_config("unused");
    c.hyper.batch_k = 1;
    CHECK_THROWS_WITH_AS(c.validate(), "hyper.batch_k", ConfigError);
    c = tiny_config("unused");
    c.hyper.style_keep = 99;
    CHECK_THROWS_WITH_AS(c.validate(), "hyper.style_keep", ConfigError);
    c = tiny_config("unused");
    c.hyper.decay_epochs = {5};
    CHECK_THROWS_WITH_AS(c.validate(), "hyper.decay_epochs", ConfigError);
    c = tiny_config("unused");
    c.hyper.contrast_lo = 2.0;
    CHECK_THROWS_WITH_AS(c.validate(), "hyper.contrast_range", ConfigError);
}

TEST_CASE("config json round trip") {
    RunConfig c = tiny_config("roundtrip");
    const auto text = c.to_json();
    const auto back = RunConfig::from_json(text);
    CHECK(back.to_json() == text);
    CHECK(back.seed == c.seed);
    CHECK(back.hyper.style_keep == c.hyper.style_keep);
    CHECK(back.encoder.d1 == c.encoder.d1);
}

TEST_CASE("stage-2a checkpoints round trip and reject truncation") {
    const auto dir = fresh_dir("ckpt2a");
    RunConfig config = tiny_config((dir / "run").string());
    auto data = tiny_dataset(config, 4, 2);
    auto state = make_stage2a_state(config, data.manifest.num_identities);
    train_stage2a(state, data, 2);

    const auto path = dir / "stage2a_test.ckpt";
    save_stage2a_checkpoint(state, path);
    auto loaded = load_stage2a_checkpoint(path);
    CHECK(loaded.steps_done == 2);
    CHECK(loaded.encoder->params().checksum() == state.encoder->params().checksum());
    CHECK(loaded.modules->params().checksum() == state.modules->params().checksum());

    // corrupt the file
    auto bytes = read_text_file(path);
    bytes.resize(bytes.size() - 17);
    write_text_file(path, bytes);
    CHECK_THROWS_AS(load_stage2a_checkpoint(path), nn::ChecksumError);
    CHECK_THROWS_AS(load_stage2a_checkpoint(dir / "missing.ckpt"), CheckpointError);
}

TEST_CASE("resume at step t then one step equals t+1 uninterrupted steps") {
    const auto dir = fresh_dir("resume");
    RunConfig config = tiny_config((dir / "run").string());
    auto data = tiny_dataset(config, 4, 2);

    auto direct = make_stage2a_state(config, data.manifest.num_identities);
    train_stage2a(direct, data, 4);

    auto interrupted = make_stage2a_state(config, data.manifest.num_identities);
    train_stage2a(interrupted, data, 3);
    const auto path = dir / "mid.ckpt";
    save_stage2a_checkpoint(interrupted, path);
    auto resumed = load_stage2a_checkpoint(path);
    train_stage2a(resumed, data, 4);

    CHECK(resumed.encoder->params().checksum() == direct.encoder->params().checksum());
    CHECK(resumed.modules->params().checksum() == direct.modules->params().checksum());
}

TEST_CASE("stage 2b requires the stage-2a artifact") {
    const auto dir = fresh_dir("dep2b");
    RunConfig config = tiny_config((dir / "run").string());
    CHECK_THROWS_AS(run_train_stage2b(config), DependencyError);
}

TEST_CASE("full toy pipeline: forge, synth, train both stages, eval") {
    const auto dir = fresh_dir("pipeline");
    RunConfig config = tiny_config((dir / "run").string());

    run_forge(config);
    CHECK(fs::exists(config.forge_dir() / "identity_specs.json"));
    CHECK(fs::exists(config.forge_dir() / "prompts" / "00000.txt"));

    run_synth(config);
    CHECK(fs::exists(config.dataset_dir() / "manifest.json"));
    const auto manifest =
        synth::manifest_from_json(read_text_file(config.dataset_dir() / "manifest.json"));
    CHECK(manifest.num_identities == 6);
    CHECK(manifest.entries.size() == 6 * 4);

    run_train_stage2a(config);
    CHECK(fs::exists(config.checkpoint_dir() / "stage2a_1.ckpt"));
    CHECK(fs::exists(config.log_dir() / "stage2a.jsonl"));

    run_train_stage2b(config);
    CHECK(fs::exists(config.checkpoint_dir() / "stage2b_1.ckpt"));

    EvalOptions opts;
    opts.query_dir = config.dataset_dir().string();
    opts.gallery_dir = config.dataset_dir().string();
    opts.report_path = (dir / "report.json").string();
    opts.histogram_pairs = 500;
    opts.histogram_bins = 10;
    const auto report = run_eval(config, opts);
    CHECK(report.rank1 == doctest::Approx(1.0)); // every query appears in the gallery
    CHECK(fs::exists(opts.report_path));

    run_plot(opts.report_path, (dir / "hist.svg").string());
    CHECK(fs::exists(dir / "hist.svg"));
}

TEST_CASE("forge and synth are byte-deterministic under a fixed seed") {
    const auto dir = fresh_dir("determinism");
    RunConfig a = tiny_config((dir / "a").string());
    RunConfig b = tiny_config((dir / "b").string());
    run_forge(a);
    run_synth(a);
    run_forge(b);
    run_synth(b);
    CHECK(read_text_file(a.forge_dir() / "identity_specs.json") ==
          read_text_file(b.forge_dir() / "identity_specs.json"));
    CHECK(read_text_file(a.dataset_dir() / "manifest.json") ==
          read_text_file(b.dataset_dir() / "manifest.json"));
    // sample the dataset images too
    CHECK(read_text_file(a.dataset_dir() / "images" / synth::sample_filename(0, 0)) ==
          read_text_file(b.dataset_dir() / "images" / synth::sample_filename(0, 0)));
}

TEST_CASE("loss logs are byte-identical across reruns") {
    const auto dir = fresh_dir("loglines");
    RunConfig config = tiny_config((dir / "run").string());
    run_forge(config);
    run_synth(config);

    run_train_stage2a(config);
    const auto log1 = read_text_file(config.log_dir() / "stage2a.jsonl");
    run_train_stage2a(config);
    const auto log2 = read_text_file(config.log_dir() / "stage2a.jsonl");
    CHECK(log1 == log2);
    CHECK(log1.find("\"stage\":\"stage2a\"") != std::string::npos);
}

TEST_CASE("style transforms are deterministic and distinct per domain") {
    auto data = toy::build_toy_dataset(2, 2, 3);
    const auto& img = data.images[0];
    const auto d0 = toy::apply_style_transform(img, 0);
    CHECK(d0 == img);
    const auto d1 = toy::apply_style_transform(img, 1);
    const auto d2 = toy::apply_style_transform(img, 2);
    CHECK(d1 == toy::apply_style_transform(img, 1));
    CHECK(d1 != d2);
    CHECK(d1 != img);
}
