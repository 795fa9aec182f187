#include "dppp/orchestration.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <set>

#include "dppp/rng.hpp"

namespace dppp::run {

using nlohmann::json;
namespace fs = std::filesystem;

// --- config ---

void RunConfig::validate() const {
    if (hyper.batch_k < 2) throw ConfigError("hyper.batch_k");
    if (hyper.batch_p < 2) throw ConfigError("hyper.batch_p");
    if (hyper.style_keep < 1 || hyper.style_keep > hyper.style_tokens) {
        throw ConfigError("hyper.style_keep");
    }
    if (hyper.epochs < 1) throw ConfigError("hyper.epochs");
    for (const int e : hyper.decay_epochs) {
        if (e < 1 || e > hyper.epochs) throw ConfigError("hyper.decay_epochs");
    }
    if (hyper.decay_factor <= 0.0 || hyper.decay_factor > 1.0) {
        throw ConfigError("hyper.decay_factor");
    }
    if (hyper.contrast_lo >= hyper.contrast_hi) throw ConfigError("hyper.contrast_range");
    if (hyper.tau <= 0.0) throw ConfigError("hyper.tau");
    if (hyper.lr_encoder <= 0.0) throw ConfigError("hyper.lr_encoder");
    if (hyper.lr_new <= 0.0) throw ConfigError("hyper.lr_new");
    if (forge_count < 1) throw ConfigError("forge.count");
    if (scenes_per_lighting < 1) throw ConfigError("forge.scenes_per_lighting");
    if (synth_parallel < 1) throw ConfigError("synth.parallel");
    if (backbone != "toy" && backbone != "vit-b-16") throw ConfigError("backbone");
    encoder.validate();
}

RunConfig RunConfig::defaults() { return RunConfig{}; }

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

void apply_encoder_json(const json& j, enc::EncoderConfig& e) {
    maybe(j, "image_height", e.image_height);
    maybe(j, "image_width", e.image_width);
    maybe(j, "patch_size", e.patch_size);
    maybe(j, "d1", e.d1);
    maybe(j, "d2", e.d2);
    maybe(j, "dt", e.dt);
    maybe(j, "vision_layers", e.vision_layers);
    maybe(j, "vision_heads", e.vision_heads);
    maybe(j, "text_layers", e.text_layers);
    maybe(j, "text_heads", e.text_heads);
    maybe(j, "hook_layer", e.hook_layer);
    maybe(j, "context_length", e.context_length);
    maybe(j, "vocab", e.vocab);
    // m is derived from the patch geometry; accept it as a cross-check
    if (j.contains("m") && j.at("m").get<int>() != e.patches()) {
        throw ConfigError("encoder.m");
    }
}

json encoder_to_json(const enc::EncoderConfig& e) {
    return json{{"image_height", e.image_height},
                {"image_width", e.image_width},
                {"patch_size", e.patch_size},
                {"d1", e.d1},
                {"d2", e.d2},
                {"dt", e.dt},
                {"vision_layers", e.vision_layers},
                {"vision_heads", e.vision_heads},
                {"text_layers", e.text_layers},
                {"text_heads", e.text_heads},
                {"hook_layer", e.hook_layer},
                {"context_length", e.context_length},
                {"vocab", e.vocab}};
}

} // namespace

RunConfig RunConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c = defaults();
    maybe(j, "seed", c.seed);
    maybe(j, "backbone", c.backbone);
    if (j.contains("encoder")) {
        maybe(j.at("encoder"), "backbone", c.backbone);
    }
    c.encoder = c.backbone == "vit-b-16" ? enc::EncoderConfig::production()
                                         : enc::EncoderConfig::toy();
    if (j.contains("encoder")) {
        apply_encoder_json(j.at("encoder"), c.encoder);
    }
    if (j.contains("hyper")) {
        const auto& h = j.at("hyper");
        maybe(h, "tau", c.hyper.tau);
        maybe(h, "delta", c.hyper.delta);
        maybe(h, "alpha", c.hyper.alpha);
        maybe(h, "label_smoothing", c.hyper.label_smoothing);
        maybe(h, "style_tokens", c.hyper.style_tokens);
        maybe(h, "style_keep", c.hyper.style_keep);
        maybe(h, "content_hidden", c.hyper.content_hidden);
        maybe(h, "style_hidden", c.hyper.style_hidden);
        maybe(h, "batch_p", c.hyper.batch_p);
        maybe(h, "batch_k", c.hyper.batch_k);
        maybe(h, "epochs", c.hyper.epochs);
        maybe(h, "lr_encoder", c.hyper.lr_encoder);
        maybe(h, "lr_new", c.hyper.lr_new);
        maybe(h, "decay_epochs", c.hyper.decay_epochs);
        maybe(h, "decay_factor", c.hyper.decay_factor);
        if (h.contains("contrast_range")) {
            const auto r = h.at("contrast_range");
            c.hyper.contrast_lo = r.at(0);
            c.hyper.contrast_hi = r.at(1);
        }
    }
    if (j.contains("forge")) {
        const auto& f = j.at("forge");
        maybe(f, "catalog", c.catalog_path);
        maybe(f, "count", c.forge_count);
        maybe(f, "scenes_per_lighting", c.scenes_per_lighting);
    }
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        maybe(s, "grid", c.grid);
        maybe(s, "cell_width", c.cell_width);
        maybe(s, "cell_height", c.cell_height);
        maybe(s, "generator", c.generator_backend);
        maybe(s, "segmenter", c.segmenter_backend);
        maybe(s, "parallel", c.synth_parallel);
        maybe(s, "views_per_identity", c.views_per_identity);
    }
    maybe(j, "workdir", c.workdir);
    c.validate();
    return c;
}

std::string RunConfig::to_json() const {
    json j{{"seed", seed},
           {"backbone", backbone},
           {"encoder", encoder_to_json(encoder)},
           {"hyper",
            {{"tau", hyper.tau},
             {"delta", hyper.delta},
             {"alpha", hyper.alpha},
             {"label_smoothing", hyper.label_smoothing},
             {"style_tokens", hyper.style_tokens},
             {"style_keep", hyper.style_keep},
             {"content_hidden", hyper.content_hidden},
             {"style_hidden", hyper.style_hidden},
             {"batch_p", hyper.batch_p},
             {"batch_k", hyper.batch_k},
             {"epochs", hyper.epochs},
             {"lr_encoder", hyper.lr_encoder},
             {"lr_new", hyper.lr_new},
             {"decay_epochs", hyper.decay_epochs},
             {"decay_factor", hyper.decay_factor},
             {"contrast_range", {hyper.contrast_lo, hyper.contrast_hi}}}},
           {"forge",
            {{"catalog", catalog_path},
             {"count", forge_count},
             {"scenes_per_lighting", scenes_per_lighting}}},
           {"synth",
            {{"grid", grid},
             {"cell_width", cell_width},
             {"cell_height", cell_height},
             {"generator", generator_backend},
             {"segmenter", segmenter_backend},
             {"parallel", synth_parallel},
             {"views_per_identity", views_per_identity}}},
           {"workdir", workdir}};
    return j.dump(2) + "\n";
}

RunConfig RunConfig::load(const std::string& config_path) {
    std::string path = config_path;
    if (path.empty()) {
        if (const char* env = std::getenv("DPPP_CONFIG")) {
            path = env;
        }
    }
    if (path.empty()) {
        return defaults();
    }
    if (!fs::exists(path)) {
        throw ConfigError("config file not found: " + path);
    }
    return from_json(read_text_file(path));
}

fs::path RunConfig::forge_dir() const { return fs::path(workdir) / "forge"; }
fs::path RunConfig::dataset_dir() const { return fs::path(workdir) / "dataset"; }
fs::path RunConfig::checkpoint_dir() const { return fs::path(workdir) / "checkpoints"; }
fs::path RunConfig::log_dir() const { return fs::path(workdir) / "logs"; }

double lr_factor_for_epoch(const Hyper& hyper, int epoch) {
    double factor = 1.0;
    for (const int boundary : hyper.decay_epochs) {
        if (epoch >= boundary) {
            factor *= hyper.decay_factor;
        }
    }
    return factor;
}

// --- sampling and augmentation ---

std::vector<std::vector<int>> pk_sample_batches(const synth::DatasetManifest& manifest,
                                                int P, int K, std::uint64_t seed) {
    if (P < 1 || K < 1) {
        throw SamplerError("P and K must be positive");
    }
    std::vector<std::vector<int>> by_identity(static_cast<std::size_t>(manifest.num_identities));
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        by_identity[static_cast<std::size_t>(manifest.entries[i].identity_id)].push_back(
            static_cast<int>(i));
    }
    for (std::size_t id = 0; id < by_identity.size(); ++id) {
        if (by_identity[id].empty()) {
            throw SamplerError("identity " + std::to_string(id) + " has no samples");
        }
    }
    const int n = manifest.num_identities;
    if (n < P) {
        throw SamplerError("manifest has " + std::to_string(n) +
                           " identities, fewer than P=" + std::to_string(P));
    }

    Rng rng(seed);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());

    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += P) {
        std::vector<int> ids(order.begin() + start,
                             order.begin() + std::min(start + P, n));
        // top up the final short batch with identities from earlier in the epoch
        std::set<int> in_batch(ids.begin(), ids.end());
        while (static_cast<int>(ids.size()) < P) {
            const int candidate = order[static_cast<std::size_t>(rng.uniform_int(0, n - 1))];
            if (in_batch.insert(candidate).second) {
                ids.push_back(candidate);
            }
        }
        std::vector<int> batch;
        batch.reserve(static_cast<std::size_t>(P) * K);
        for (const int id : ids) {
            auto& pool = by_identity[static_cast<std::size_t>(id)];
            if (static_cast<int>(pool.size()) >= K) {
                std::vector<int> copy = pool;
                rng.shuffle(copy.begin(), copy.end());
                batch.insert(batch.end(), copy.begin(), copy.begin() + K);
            } else {
                for (int j = 0; j < K; ++j) {
                    batch.push_back(pool[static_cast<std::size_t>(
                        rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))]);
                }
            }
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

Image contrast_augment_with(const Image& image, double coefficient) {
    if (image.empty()) {
        throw Error("contrast_augment: empty image");
    }
    double mean = 0.0;
    for (const auto px : image.pixels) {
        mean += px;
    }
    mean /= static_cast<double>(image.pixels.size());
    Image out = image;
    for (auto& px : out.pixels) {
        const double v = mean + coefficient * (px - mean);
        px = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
    return out;
}

Image contrast_augment(const Image& image, double lo, double hi, std::uint64_t seed) {
    if (lo >= hi) {
        throw RangeError("contrast range must satisfy lo < hi");
    }
    Rng rng(seed);
    return contrast_augment_with(image, rng.uniform_real(lo, hi));
}

// --- state construction ---

train::PseudoWordHyper Stage2aState::stage_hyper() const {
    train::PseudoWordHyper h;
    h.tau = config.hyper.tau;
    h.delta = config.hyper.delta;
    h.alpha = config.hyper.alpha;
    h.label_smoothing = config.hyper.label_smoothing;
    h.style_tokens = config.hyper.style_tokens;
    h.style_keep = config.hyper.style_keep;
    h.content_hidden = config.hyper.content_hidden;
    h.style_hidden = config.hyper.style_hidden;
    return h;
}

train::DisentangleHyper Stage2bState::stage_hyper() const {
    train::DisentangleHyper h;
    h.tau = config.hyper.tau;
    h.alpha = config.hyper.alpha;
    h.label_smoothing = config.hyper.label_smoothing;
    return h;
}

Stage2aState make_stage2a_state(const RunConfig& config, int num_classes) {
    config.validate();
    if (num_classes < 2) {
        throw ConfigError("stage 2a needs at least two identities");
    }
    Stage2aState state;
    state.config = config;
    state.num_classes = num_classes;
    state.encoder = std::make_unique<enc::VisionTextEncoder>(config.encoder,
                                                             mix_seed(config.seed, 0xE11C));
    state.encoder->freeze_text();
    Rng rng(mix_seed(config.seed, 0xA12D));
    state.modules = std::make_unique<train::PseudoWordModules>(rng, config.encoder,
                                                               state.stage_hyper(), num_classes);
    state.optimizer = std::make_unique<nn::Adam>();
    state.optimizer->add_group(state.encoder->vision_params().vars(), config.hyper.lr_encoder);
    state.optimizer->add_group(state.modules->params().vars(), config.hyper.lr_new);
    return state;
}

Stage2bState make_stage2b_state(const RunConfig& config, const Stage2aState& stage2a) {
    Stage2bState state;
    state.config = config;
    state.num_classes = stage2a.num_classes;
    state.encoder = std::make_unique<enc::VisionTextEncoder>(config.encoder,
                                                             mix_seed(config.seed, 0xE11C));
    Rng rng(mix_seed(config.seed, 0xA12D));
    state.modules = std::make_unique<train::PseudoWordModules>(
        rng, config.encoder, stage2a.stage_hyper(), stage2a.num_classes);

    // copy trained stage-2a values, then freeze every earlier-stage parameter
    auto copy_values = [](const nn::ParamMap& from, const nn::ParamMap& to) {
        if (from.items.size() != to.items.size()) {
            throw CheckpointError("stage-2a parameter layout mismatch");
        }
        for (std::size_t i = 0; i < from.items.size(); ++i) {
            to.items[i].second->value = from.items[i].second->value;
        }
    };
    copy_values(stage2a.encoder->params(), state.encoder->params());
    copy_values(stage2a.modules->params(), state.modules->params());
    state.encoder->freeze_all();
    state.modules->params().set_requires_grad(false);

    Rng proj_rng(mix_seed(config.seed, 0xB22E));
    state.projector = std::make_unique<train::DestylizationProjector>(proj_rng,
                                                                      config.encoder.d1);
    state.classifier = std::make_unique<nn::Linear>(proj_rng, config.encoder.d1,
                                                    stage2a.num_classes);
    state.optimizer = std::make_unique<nn::Adam>();
    state.optimizer->add_group(state.projector->params("projector").vars(),
                               config.hyper.lr_new);
    state.optimizer->add_group(state.classifier->params("classifier2").vars(),
                               config.hyper.lr_new);
    return state;
}

// --- dataset loading ---

LoadedDataset load_dataset(const fs::path& root) {
    const fs::path manifest_path = root / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw DependencyError("missing dataset manifest: " + manifest_path.string());
    }
    LoadedDataset data;
    data.manifest = synth::manifest_from_json(read_text_file(manifest_path));
    data.images.reserve(data.manifest.entries.size());
    for (const auto& entry : data.manifest.entries) {
        data.images.push_back(read_png(root / entry.path));
    }
    return data;
}

int batches_per_epoch(const synth::DatasetManifest& manifest, int P) {
    return (manifest.num_identities + P - 1) / P;
}

// --- training loops ---

namespace {

Image prepare_input(const Image& img, const enc::EncoderConfig& cfg) {
    if (img.width == cfg.image_width && img.height == cfg.image_height) {
        return img;
    }
    return center_crop_resize(img, cfg.image_width, cfg.image_height);
}

std::vector<train::TrainingExample> assemble_batch(const LoadedDataset& data,
                                                   const std::vector<int>& indices,
                                                   const RunConfig& config, long step) {
    std::vector<train::TrainingExample> batch;
    batch.reserve(indices.size());
    for (std::size_t pos = 0; pos < indices.size(); ++pos) {
        const auto& entry = data.manifest.entries[static_cast<std::size_t>(indices[pos])];
        Image img = prepare_input(data.images[static_cast<std::size_t>(indices[pos])],
                                  config.encoder);
        img = contrast_augment(
            img, config.hyper.contrast_lo, config.hyper.contrast_hi,
            mix_seed(mix_seed(config.seed, 0xAC37),
                     (static_cast<std::uint64_t>(step) << 16) ^ pos));
        batch.push_back({std::move(img), entry.identity_id});
    }
    return batch;
}

} // namespace

void train_stage2a(Stage2aState& state, const LoadedDataset& data, long target_steps,
                   const StepSink& sink) {
    const int bpe = batches_per_epoch(data.manifest, state.config.hyper.batch_p);
    long cached_epoch = -1;
    std::vector<std::vector<int>> batches;
    while (state.steps_done < target_steps) {
        const long epoch0 = state.steps_done / bpe;
        if (epoch0 != cached_epoch) {
            batches = pk_sample_batches(data.manifest, state.config.hyper.batch_p,
                                        state.config.hyper.batch_k,
                                        mix_seed(state.config.seed, 0xB000 + epoch0));
            cached_epoch = epoch0;
        }
        const auto batch = assemble_batch(
            data, batches[static_cast<std::size_t>(state.steps_done % bpe)], state.config,
            state.steps_done);
        const auto report = train::ptl_step(
            batch, *state.encoder, *state.modules, *state.optimizer,
            lr_factor_for_epoch(state.config.hyper, static_cast<int>(epoch0) + 1),
            state.stage_hyper());
        ++state.steps_done;
        if (sink) {
            sink("stage2a", static_cast<int>(epoch0) + 1, state.steps_done, report);
        }
    }
}

void train_stage2b(Stage2bState& state, const LoadedDataset& data, long target_steps,
                   const StepSink& sink) {
    const int bpe = batches_per_epoch(data.manifest, state.config.hyper.batch_p);
    long cached_epoch = -1;
    std::vector<std::vector<int>> batches;
    while (state.steps_done < target_steps) {
        const long epoch0 = state.steps_done / bpe;
        if (epoch0 != cached_epoch) {
            batches = pk_sample_batches(data.manifest, state.config.hyper.batch_p,
                                        state.config.hyper.batch_k,
                                        mix_seed(state.config.seed, 0xC000 + epoch0));
            cached_epoch = epoch0;
        }
        const auto batch = assemble_batch(
            data, batches[static_cast<std::size_t>(state.steps_done % bpe)], state.config,
            0x40000000L + state.steps_done);
        const auto report = train::psd_step(
            batch, *state.encoder, *state.modules, *state.projector, *state.classifier,
            *state.optimizer,
            lr_factor_for_epoch(state.config.hyper, static_cast<int>(epoch0) + 1),
            state.stage_hyper());
        ++state.steps_done;
        if (sink) {
            sink("stage2b", static_cast<int>(epoch0) + 1, state.steps_done, report);
        }
    }
}

// --- checkpoints ---

namespace {

void put_params(nn::TensorArchive& ar, const nn::ParamMap& params) {
    for (const auto& [name, var] : params.items) {
        ar.put(name, var->value);
    }
}

void get_params(const nn::TensorArchive& ar, const nn::ParamMap& params) {
    for (const auto& [name, var] : params.items) {
        const auto& m = ar.get(name);
        if (m.rows() != var->value.rows() || m.cols() != var->value.cols()) {
            throw CheckpointError("checkpoint tensor shape mismatch: " + name);
        }
        var->value = m;
    }
}

void put_moments(nn::TensorArchive& ar, const nn::Adam& opt) {
    const auto moments = opt.moments();
    for (std::size_t i = 0; i < moments.size(); ++i) {
        ar.put("adam." + std::to_string(i), moments[i]);
    }
}

void get_moments(const nn::TensorArchive& ar, nn::Adam& opt, long steps) {
    std::vector<nn::Mat> moments;
    for (std::size_t i = 0;; ++i) {
        const std::string key = "adam." + std::to_string(i);
        if (!ar.has(key)) break;
        moments.push_back(ar.get(key));
    }
    opt.set_moments(moments, steps);
}

} // namespace

void save_stage2a_checkpoint(const Stage2aState& state, const fs::path& path) {
    nn::TensorArchive ar;
    const json meta{{"format", 1},
                    {"stage", "2a"},
                    {"steps_done", state.steps_done},
                    {"num_classes", state.num_classes},
                    {"config", json::parse(state.config.to_json())}};
    ar.put_string("meta", meta.dump());
    put_params(ar, state.encoder->params());
    put_params(ar, state.modules->params());
    put_moments(ar, *state.optimizer);
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    ar.save(path);
}

Stage2aState load_stage2a_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) {
        throw CheckpointError("checkpoint not found: " + path.string());
    }
    const auto ar = nn::TensorArchive::load(path);
    const json meta = json::parse(ar.get_string("meta"));
    if (meta.at("stage") != "2a") {
        throw CheckpointError("not a stage-2a checkpoint: " + path.string());
    }
    auto config = RunConfig::from_json(meta.at("config").dump());
    Stage2aState state = make_stage2a_state(config, meta.at("num_classes"));
    state.steps_done = meta.at("steps_done");
    get_params(ar, state.encoder->params());
    get_params(ar, state.modules->params());
    get_moments(ar, *state.optimizer, state.steps_done);
    return state;
}

void save_stage2b_checkpoint(const Stage2bState& state, const fs::path& path) {
    nn::TensorArchive ar;
    const json meta{{"format", 1},
                    {"stage", "2b"},
                    {"steps_done", state.steps_done},
                    {"num_classes", state.num_classes},
                    {"parent_checkpoint_hash", state.parent_checkpoint_hash},
                    {"config", json::parse(state.config.to_json())}};
    ar.put_string("meta", meta.dump());
    put_params(ar, state.encoder->params());
    put_params(ar, state.modules->params());
    state.projector->save_state(ar, "projector");
    put_params(ar, state.classifier->params("classifier2"));
    put_moments(ar, *state.optimizer);
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    ar.save(path);
}

Stage2bState load_stage2b_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) {
        throw CheckpointError("checkpoint not found: " + path.string());
    }
    const auto ar = nn::TensorArchive::load(path);
    const json meta = json::parse(ar.get_string("meta"));
    if (meta.at("stage") != "2b") {
        throw CheckpointError("not a stage-2b checkpoint: " + path.string());
    }
    auto config = RunConfig::from_json(meta.at("config").dump());
    // bootstrap through a blank stage-2a state with the same layout
    Stage2aState blank = make_stage2a_state(config, meta.at("num_classes"));
    Stage2bState state = make_stage2b_state(config, blank);
    state.steps_done = meta.at("steps_done");
    state.parent_checkpoint_hash = meta.at("parent_checkpoint_hash");
    get_params(ar, state.encoder->params());
    get_params(ar, state.modules->params());
    state.projector->load_state(ar, "projector");
    get_params(ar, state.classifier->params("classifier2"));
    get_moments(ar, *state.optimizer, state.steps_done);
    return state;
}

// --- stages ---

void run_forge(const RunConfig& config) {
    config.validate();
    const auto catalog = config.catalog_path.empty()
                             ? forge::default_catalog()
                             : forge::load_attribute_catalog(config.catalog_path);
    const auto specs = forge::generate_identity_specs(
        catalog, static_cast<std::uint64_t>(config.forge_count), config.seed);

    const auto dir = config.forge_dir();
    fs::create_directories(dir / "prompts");
    write_file_atomic(dir / "identity_specs.json", forge::identity_specs_to_json(specs));
    for (const auto& spec : specs) {
        const auto prompt = forge::render_character_prompt(spec);
        char name[32];
        std::snprintf(name, sizeof(name), "%05d.txt", spec.identity_id);
        write_text_file(dir / "prompts" / name, prompt.text + "\n");
    }
    std::printf("forge: wrote %zu identity specs to %s\n", specs.size(), dir.c_str());
}

void run_synth(const RunConfig& config, const std::string& specs_path) {
    config.validate();
    const fs::path specs_file = specs_path.empty()
                                    ? config.forge_dir() / "identity_specs.json"
                                    : fs::path(specs_path);
    if (!fs::exists(specs_file)) {
        throw DependencyError("missing identity specs: " + specs_file.string() +
                              " (run `dppp forge` first)");
    }
    const auto specs = forge::identity_specs_from_json(read_text_file(specs_file));
    if (specs.empty()) {
        throw synth::EmptyDatasetError("identity spec list is empty");
    }

    const auto grid = synth::parse_grid(config.grid, config.cell_width, config.cell_height);
    auto generator = synth::make_generator(config.generator_backend);
    auto segmenter = synth::make_segmenter(config.segmenter_backend);

    // mock pose skeletons, one per cell
    std::vector<Image> poses;
    for (int i = 0; i < grid.cells(); ++i) {
        Image pose(grid.cell_width / 2, grid.cell_height / 2, 1, 0);
        Rng rng(mix_seed(config.seed, 0x905E + static_cast<std::uint64_t>(i)));
        const int cx = pose.width / 2 + static_cast<int>(rng.uniform_int(-pose.width / 8,
                                                                         pose.width / 8));
        for (int y = pose.height / 8; y < pose.height - pose.height / 8; ++y) {
            pose.at(cx, y, 0) = 255;
        }
        for (int x = pose.width / 4; x < 3 * pose.width / 4; ++x) {
            pose.at(x, pose.height / 3, 0) = 255;
        }
        poses.push_back(std::move(pose));
    }
    const auto conditioning = synth::build_conditioning(grid, poses);
    const auto backgrounds = synth::build_background_pool(
        *generator, config.scenes_per_lighting, config.cell_width, config.cell_height,
        mix_seed(config.seed, 0xB6));

    auto synth_one = [&](const forge::IdentitySpec& spec) {
        try {
            return synth::synthesize_identity_samples(spec, grid, conditioning, *generator,
                                                      *segmenter, backgrounds, config.seed,
                                                      config.views_per_identity);
        } catch (const synth::GenerationError& e) {
            if (!e.retryable) throw;
            return synth::synthesize_identity_samples(spec, grid, conditioning, *generator,
                                                      *segmenter, backgrounds, config.seed,
                                                      config.views_per_identity);
        }
    };

    // bounded in-flight parallelism; results land indexed by identity, so
    // completion order cannot affect the output
    std::vector<std::vector<synth::ImageSample>> per_identity(specs.size());
    const int lanes = std::max(1, config.synth_parallel);
    for (std::size_t base = 0; base < specs.size(); base += static_cast<std::size_t>(lanes)) {
        std::vector<std::future<std::vector<synth::ImageSample>>> inflight;
        const std::size_t end = std::min(specs.size(), base + static_cast<std::size_t>(lanes));
        for (std::size_t i = base; i < end; ++i) {
            inflight.push_back(std::async(std::launch::async, synth_one, specs[i]));
        }
        for (std::size_t i = base; i < end; ++i) {
            per_identity[i] = inflight[i - base].get();
        }
    }

    const auto out_dir = config.dataset_dir();
    fs::create_directories(out_dir / "images");
    std::vector<synth::ImageSample> all;
    for (auto& samples : per_identity) {
        for (auto& s : samples) {
            s.source_path = "images/" + synth::sample_filename(s.identity_id, s.view_index);
            write_png(s.image, out_dir / s.source_path);
            all.push_back(std::move(s));
        }
    }
    const auto manifest = synth::build_dataset_manifest(all);
    write_file_atomic(out_dir / "manifest.json", synth::manifest_to_json(manifest));
    std::printf("synth: wrote %zu samples (%d identities) to %s\n", manifest.entries.size(),
                manifest.num_identities, out_dir.c_str());
}

namespace {

StepSink jsonl_sink(std::ofstream& out) {
    return [&out](const std::string& stage, int epoch, long step,
                  const train::LossReport& report) {
        json line{{"stage", stage},
                  {"epoch", epoch},
                  {"step", step},
                  {"contrastive", report.contrastive},
                  {"triplet_text", report.triplet_text},
                  {"triplet_image", report.triplet_image},
                  {"identity", report.identity},
                  {"total", report.total}};
        out << line.dump() << "\n";
    };
}

} // namespace

void run_train_stage2a(const RunConfig& config, const std::string& data_dir) {
    config.validate();
    const fs::path root = data_dir.empty() ? config.dataset_dir() : fs::path(data_dir);
    const auto data = load_dataset(root);

    auto state = make_stage2a_state(config, data.manifest.num_identities);
    const int bpe = batches_per_epoch(data.manifest, config.hyper.batch_p);

    fs::create_directories(config.log_dir());
    fs::create_directories(config.checkpoint_dir());
    std::ofstream log(config.log_dir() / "stage2a.jsonl", std::ios::trunc);
    const auto sink = jsonl_sink(log);

    for (int epoch = 1; epoch <= config.hyper.epochs; ++epoch) {
        train_stage2a(state, data, static_cast<long>(epoch) * bpe, sink);
        save_stage2a_checkpoint(state, config.checkpoint_dir() /
                                           ("stage2a_" + std::to_string(epoch) + ".ckpt"));
        std::printf("stage2a: epoch %d/%d done (%ld steps)\n", epoch, config.hyper.epochs,
                    state.steps_done);
    }

    // encoder-only snapshot under the encoder module's naming convention
    nn::TensorArchive enc_ar;
    state.encoder->save(enc_ar, "encoder");
    enc_ar.save(config.checkpoint_dir() / "encoder_2a.ckpt");
}

void run_train_stage2b(const RunConfig& config, const std::string& data_dir) {
    config.validate();
    const fs::path parent = config.checkpoint_dir() /
                            ("stage2a_" + std::to_string(config.hyper.epochs) + ".ckpt");
    if (!fs::exists(parent)) {
        throw DependencyError("missing stage-2a checkpoint: " + parent.string() +
                              " (run `dppp train --stage 2a` first)");
    }
    const fs::path root = data_dir.empty() ? config.dataset_dir() : fs::path(data_dir);
    const auto data = load_dataset(root);

    auto stage2a = load_stage2a_checkpoint(parent);
    auto state = make_stage2b_state(config, stage2a);
    const std::string parent_bytes = read_text_file(parent);
    state.parent_checkpoint_hash = fnv1a64(parent_bytes.data(), parent_bytes.size());

    const int bpe = batches_per_epoch(data.manifest, config.hyper.batch_p);
    fs::create_directories(config.log_dir());
    std::ofstream log(config.log_dir() / "stage2b.jsonl", std::ios::trunc);
    const auto sink = jsonl_sink(log);

    for (int epoch = 1; epoch <= config.hyper.epochs; ++epoch) {
        train_stage2b(state, data, static_cast<long>(epoch) * bpe, sink);
        save_stage2b_checkpoint(state, config.checkpoint_dir() /
                                           ("stage2b_" + std::to_string(epoch) + ".ckpt"));
        std::printf("stage2b: epoch %d/%d done (%ld steps)\n", epoch, config.hyper.epochs,
                    state.steps_done);
    }

    nn::TensorArchive enc_ar;
    state.encoder->save(enc_ar, "encoder");
    enc_ar.save(config.checkpoint_dir() / "encoder_2b.ckpt");
}

namespace {

struct EvalSet {
    std::vector<eval::RetrievalItem> items;
    std::vector<Image> images;
};

EvalSet load_eval_set(const fs::path& dir) {
    EvalSet set;
    if (fs::exists(dir / "manifest.json")) {
        const auto manifest = synth::manifest_from_json(read_text_file(dir / "manifest.json"));
        for (const auto& entry : manifest.entries) {
            set.items.push_back({entry.identity_id, -1});
            set.images.push_back(read_png(dir / entry.path));
        }
        return set;
    }
    // Market-style directory of PNGs named ID_cCsS_frame_bbox.png
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".png") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        const auto item = eval::parse_market_filename(f.filename().string());
        if (!item) {
            continue;
        }
        set.items.push_back(*item);
        set.images.push_back(read_png(f));
    }
    if (set.items.empty()) {
        throw eval::EmptyGalleryError("no readable samples in " + dir.string());
    }
    return set;
}

} // namespace

eval::EvalReport run_eval(const RunConfig& config, const EvalOptions& options) {
    const fs::path ckpt = options.checkpoint.empty()
                              ? config.checkpoint_dir() /
                                    ("stage2b_" + std::to_string(config.hyper.epochs) + ".ckpt")
                              : fs::path(options.checkpoint);
    auto state = load_stage2b_checkpoint(ckpt);

    auto query = load_eval_set(options.query_dir);
    auto gallery = load_eval_set(options.gallery_dir);
    for (auto& img : query.images) {
        img = center_crop_resize(img, state.config.encoder.image_width,
                                 state.config.encoder.image_height);
    }
    for (auto& img : gallery.images) {
        img = center_crop_resize(img, state.config.encoder.image_width,
                                 state.config.encoder.image_height);
    }

    const auto qf = eval::extract_content_features(query.images, *state.encoder,
                                                   *state.projector);
    const auto gf = eval::extract_content_features(gallery.images, *state.encoder,
                                                   *state.projector);

    eval::QueryGallerySplit split{query.items, gallery.items};
    std::vector<std::vector<int>> rankings;
    for (Eigen::Index i = 0; i < qf.rows(); ++i) {
        rankings.push_back(eval::rank(qf.row(i), gf));
    }
    auto report = eval::compute_map_cmc(split, rankings);
    const auto hist = eval::distance_distribution(qf, gf, options.histogram_pairs,
                                                  state.config.seed, options.histogram_bins);

    const fs::path out = options.report_path.empty()
                             ? fs::path(config.workdir) / "eval_report.json"
                             : fs::path(options.report_path);
    fs::create_directories(out.parent_path().empty() ? "." : out.parent_path());
    write_file_atomic(out, eval::report_to_json(report, &hist));
    std::printf("eval: mAP=%.4f rank1=%.4f rank5=%.4f (%zu queries, %d skipped) -> %s\n",
                report.map, report.rank1, report.rank5, report.per_query_ap.size(),
                report.skipped_queries, out.c_str());
    return report;
}

void run_plot(const std::string& report_json_path, const std::string& svg_out_path) {
    const json report = json::parse(read_text_file(report_json_path));
    if (!report.contains("histogram")) {
        throw Error("report has no histogram section: " + report_json_path);
    }
    const auto counts = report.at("histogram").at("counts").get<std::vector<long>>();
    const auto edges = report.at("histogram").at("edges").get<std::vector<double>>();
    const long peak = std::max<long>(1, *std::max_element(counts.begin(), counts.end()));

    const int W = 640, H = 360, margin = 40;
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(W) + "\" height=\"" + std::to_string(H) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    const double bar_w = static_cast<double>(W - 2 * margin) / counts.size();
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double h = static_cast<double>(counts[i]) / peak * (H - 2 * margin);
        svg += "<rect x=\"" + std::to_string(margin + i * bar_w) + "\" y=\"" +
               std::to_string(H - margin - h) + "\" width=\"" + std::to_string(bar_w * 0.9) +
               "\" height=\"" + std::to_string(h) + "\" fill=\"steelblue\"/>\n";
    }
    char label[96];
    std::snprintf(label, sizeof(label),
                  "<text x=\"%d\" y=\"%d\" font-size=\"12\">distance %.3f .. %.3f</text>\n",
                  margin, H - margin / 3, edges.front(), edges.back());
    svg += label;
    svg += "</svg>\n";
    write_file_atomic(svg_out_path, svg);
    std::printf("plot: wrote %s\n", svg_out_path.c_str());
}

} // namespace dppp::run
