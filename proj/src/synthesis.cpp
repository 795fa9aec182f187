#include "dppp/synthesis.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "dppp/rng.hpp"

namespace dppp::synth {

using nlohmann::json;

void GridSpec::validate() const {
    if (cols < 1 || rows < 1 || cell_width < 1 || cell_height < 1) {
        throw GridError("grid dimensions must be positive");
    }
}

GridSpec parse_grid(const std::string& text, int cell_width, int cell_height) {
    const auto x = text.find('x');
    if (x == std::string::npos) {
        throw GridError("grid spec must look like COLSxROWS, got: " + text);
    }
    GridSpec grid;
    try {
        grid.cols = std::stoi(text.substr(0, x));
        grid.rows = std::stoi(text.substr(x + 1));
    } catch (const std::exception&) {
        throw GridError("grid spec must look like COLSxROWS, got: " + text);
    }
    grid.cell_width = cell_width;
    grid.cell_height = cell_height;
    grid.validate();
    return grid;
}

// --- conditioning ---

ConditioningBundle build_conditioning(const GridSpec& grid,
                                      const std::vector<Image>& pose_assets) {
    grid.validate();
    if (static_cast<int>(pose_assets.size()) > grid.cells()) {
        throw AssetError("more pose assets than grid cells");
    }
    const int W = grid.canvas_width();
    const int H = grid.canvas_height();

    ConditioningBundle bundle;
    bundle.edge_map = Image(W, H, 1, 0);
    // Border plus one-pixel interior separators at every cell boundary.
    for (int x = 0; x < W; ++x) {
        bundle.edge_map.at(x, 0, 0) = 255;
        bundle.edge_map.at(x, H - 1, 0) = 255;
    }
    for (int y = 0; y < H; ++y) {
        bundle.edge_map.at(0, y, 0) = 255;
        bundle.edge_map.at(W - 1, y, 0) = 255;
    }
    for (int c = 1; c < grid.cols; ++c) {
        const int x = c * grid.cell_width;
        for (int y = 0; y < H; ++y) bundle.edge_map.at(x, y, 0) = 255;
    }
    for (int r = 1; r < grid.rows; ++r) {
        const int y = r * grid.cell_height;
        for (int x = 0; x < W; ++x) bundle.edge_map.at(x, y, 0) = 255;
    }

    for (const auto& asset : pose_assets) {
        if (asset.width > grid.cell_width || asset.height > grid.cell_height) {
            throw AssetError("pose asset exceeds cell size");
        }
        if (asset.channels != 1) {
            throw AssetError("pose asset must be single channel");
        }
        // Center the skeleton inside a cell-sized map.
        Image placed(grid.cell_width, grid.cell_height, 1, 0);
        const int x0 = (grid.cell_width - asset.width) / 2;
        const int y0 = (grid.cell_height - asset.height) / 2;
        for (int y = 0; y < asset.height; ++y) {
            for (int x = 0; x < asset.width; ++x) {
                placed.at(x0 + x, y0 + y, 0) = asset.at(x, y, 0);
            }
        }
        bundle.pose_maps.push_back(std::move(placed));
    }
    return bundle;
}

// --- mock backends ---

namespace {

struct Rgb {
    int r, g, b;
};

Rgb random_color(Rng& rng, int lo = 30, int hi = 235) {
    return Rgb{static_cast<int>(rng.uniform_int(lo, hi)),
               static_cast<int>(rng.uniform_int(lo, hi)),
               static_cast<int>(rng.uniform_int(lo, hi))};
}

std::uint8_t clamp8(double v) {
    return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

double lighting_factor_from_prompt(const std::string& prompt) {
    if (prompt.find("night, dark") != std::string::npos) return 0.55;
    if (prompt.find("dusk") != std::string::npos) return 0.75;
    return 1.0;
}

void fill_rect(Image& img, int x0, int y0, int x1, int y1, Rgb c, double light) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, img.width);
    y1 = std::min(y1, img.height);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            img.at(x, y, 0) = clamp8(c.r * light);
            img.at(x, y, 1) = clamp8(c.g * light);
            img.at(x, y, 2) = clamp8(c.b * light);
        }
    }
}

// Saturated palette entry: each channel sits near 0 or near 255 (jittered),
// so identities spread across the corners of color space.
Rgb saturated_color(Rng& rng) {
    auto channel = [&rng]() {
        return rng.uniform_int(0, 1) == 1 ? static_cast<int>(rng.uniform_int(170, 250))
                                          : static_cast<int>(rng.uniform_int(10, 80));
    };
    return Rgb{channel(), channel(), channel()};
}

// Draws one person into the cell [x0,y0)+(w,h). The clothing palette is the
// identity signature; view jitter moves and rescales the figure.
void draw_mock_person(Image& img, int x0, int y0, int w, int h, Rng& id_rng_template,
                      std::uint64_t view_key, double light) {
    Rng id_rng = id_rng_template; // same palette for every view
    const Rgb skin = random_color(id_rng, 120, 230);
    const Rgb hair = random_color(id_rng, 10, 120);
    const Rgb shirt_a = saturated_color(id_rng);
    const Rgb shirt_b = saturated_color(id_rng);
    const Rgb pants = saturated_color(id_rng);
    const Rgb shoes = random_color(id_rng, 10, 150);
    const bool striped = id_rng.uniform_int(0, 1) == 1;
    const Rgb emblem = saturated_color(id_rng);
    const int emblem_slot = static_cast<int>(id_rng.uniform_int(0, 3));

    Rng view_rng(view_key);
    const int dx = static_cast<int>(view_rng.uniform_int(-w / 16, w / 16));
    const double squeeze = 0.9 + 0.2 * view_rng.uniform_real(0.0, 1.0);

    const int cx = x0 + w / 2 + dx;
    const int half = static_cast<int>(w * 0.26 * squeeze);

    // head
    fill_rect(img, cx - half / 2, y0 + static_cast<int>(0.06 * h),
              cx + half / 2, y0 + static_cast<int>(0.10 * h), hair, light);
    fill_rect(img, cx - half / 2, y0 + static_cast<int>(0.10 * h),
              cx + half / 2, y0 + static_cast<int>(0.20 * h), skin, light);
    // torso
    const int ty0 = y0 + static_cast<int>(0.22 * h);
    const int ty1 = y0 + static_cast<int>(0.54 * h);
    if (striped) {
        const int band = std::max(2, (ty1 - ty0) / 5);
        for (int y = ty0; y < ty1; y += band) {
            const Rgb& c = ((y - ty0) / band) % 2 == 0 ? shirt_a : shirt_b;
            fill_rect(img, cx - half, y, cx + half, std::min(y + band, ty1), c, light);
        }
    } else {
        fill_rect(img, cx - half, ty0, cx + half, ty1, shirt_a, light);
        fill_rect(img, cx, ty0, cx + half, ty1, shirt_b, light);
    }
    // identity emblem on the torso, quadrant keyed by identity
    {
        const int ex = emblem_slot % 2 == 0 ? cx - half / 2 : cx + half / 2;
        const int ey = (ty0 + ty1) / 2 + (emblem_slot / 2 == 0 ? -(ty1 - ty0) / 4
                                                               : (ty1 - ty0) / 8);
        fill_rect(img, ex - half / 3, ey, ex + half / 3, ey + (ty1 - ty0) / 4, emblem, light);
    }
    // arms
    fill_rect(img, cx - half - half / 3, ty0, cx - half, ty1, skin, light);
    fill_rect(img, cx + half, ty0, cx + half + half / 3, ty1, skin, light);
    // legs
    const int ly1 = y0 + static_cast<int>(0.88 * h);
    fill_rect(img, cx - half, ty1, cx - half / 6, ly1, pants, light);
    fill_rect(img, cx + half / 6, ty1, cx + half, ly1, pants, light);
    // shoes
    fill_rect(img, cx - half, ly1, cx - half / 6, y0 + static_cast<int>(0.93 * h), shoes, light);
    fill_rect(img, cx + half / 6, ly1, cx + half, y0 + static_cast<int>(0.93 * h), shoes, light);

    // per-view pixel noise over the figure area
    for (int y = y0 + static_cast<int>(0.06 * h); y < y0 + static_cast<int>(0.93 * h); ++y) {
        for (int x = std::max(x0, cx - half - half / 3);
             x < std::min(x0 + w, cx + half + half / 3); ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                const double n = static_cast<double>(view_rng.uniform_int(-8, 8));
                img.at(x, y, ch) = clamp8(img.at(x, y, ch) + n);
            }
        }
    }
}

Rgb scene_base_color(const std::string& prompt) {
    if (prompt.find("city street") != std::string::npos) return {120, 120, 125};
    if (prompt.find("commercial area") != std::string::npos) return {135, 140, 160};
    if (prompt.find("park") != std::string::npos) return {90, 140, 90};
    if (prompt.find("open field") != std::string::npos) return {150, 160, 100};
    if (prompt.find("residential area") != std::string::npos) return {160, 140, 120};
    if (prompt.find("indoor hall") != std::string::npos) return {175, 165, 150};
    return {128, 128, 128};
}

} // namespace

Image MockGenerator::generate(const GenerationRequest& request) {
    if (request.width < 1 || request.height < 1) {
        throw GenerationError("mock generator: invalid canvas size", false);
    }
    Image img(request.width, request.height, 3);
    const double light = lighting_factor_from_prompt(request.prompt);

    if (request.prompt.find("no people") != std::string::npos) {
        // Scene background: base color, low-frequency blotches, mild noise.
        const Rgb base = scene_base_color(request.prompt);
        Rng rng(mix_seed(fnv1a64(request.prompt), request.seed));
        fill_rect(img, 0, 0, img.width, img.height, base, light);
        const int blotches = 24;
        for (int i = 0; i < blotches; ++i) {
            const int bw = static_cast<int>(rng.uniform_int(img.width / 8, img.width / 3));
            const int bh = static_cast<int>(rng.uniform_int(img.height / 8, img.height / 3));
            const int bx = static_cast<int>(rng.uniform_int(0, std::max(1, img.width - bw)));
            const int by = static_cast<int>(rng.uniform_int(0, std::max(1, img.height - bh)));
            Rgb c{base.r + static_cast<int>(rng.uniform_int(-35, 35)),
                  base.g + static_cast<int>(rng.uniform_int(-35, 35)),
                  base.b + static_cast<int>(rng.uniform_int(-35, 35))};
            fill_rect(img, bx, by, bx + bw, by + bh, c, light);
        }
        for (auto& px : img.pixels) {
            px = clamp8(px + static_cast<double>(rng.uniform_int(-8, 8)));
        }
        return img;
    }

    // Character canvas keyed by (identity, seed); the grid layout comes from
    // the conditioning when present, otherwise a single cell.
    int cols = 1, rows = 1, cw = request.width, ch = request.height;
    if (request.conditioning != nullptr && !request.conditioning->edge_map.empty()) {
        // Recover the grid from the interior separator lines. Sampling two
        // interior rows/columns avoids mistaking a crossing line for one.
        const Image& em = request.conditioning->edge_map;
        cols = 1;
        for (int x = 1; x < em.width - 1; ++x) {
            if (em.at(x, 1, 0) == 255 && em.at(x, em.height - 2, 0) == 255) ++cols;
        }
        rows = 1;
        for (int y = 1; y < em.height - 1; ++y) {
            if (em.at(1, y, 0) == 255 && em.at(em.width - 2, y, 0) == 255) ++rows;
        }
        cw = request.width / cols;
        ch = request.height / rows;
    }

    const std::uint64_t id_seed = mix_seed(static_cast<std::uint64_t>(request.identity_key),
                                           request.seed);
    Rng palette_rng(id_seed);
    fill_rect(img, 0, 0, img.width, img.height, Rgb{228, 228, 228}, light);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int view = r * cols + c;
            draw_mock_person(img, c * cw, r * ch, cw, ch, palette_rng,
                             mix_seed(id_seed, 1000 + static_cast<std::uint64_t>(view)), light);
        }
    }
    return img;
}

Matte MockSegmenter::segment(const Image& image) {
    if (image.empty()) {
        throw SegmentationError("mock segmenter: empty input");
    }
    Matte matte(image.width, image.height, 0.0);
    const auto [mn, mx] = std::minmax_element(image.pixels.begin(), image.pixels.end());
    if (*mn == *mx) {
        return matte; // nothing but background; zero foreground area
    }
    const double cx = 0.5 * image.width;
    const double cy = 0.55 * image.height;
    const double rx = 0.34 * image.width;
    const double ry = 0.44 * image.height;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const double nx = (x - cx) / rx;
            const double ny = (y - cy) / ry;
            const double r = std::sqrt(nx * nx + ny * ny);
            matte.at(x, y) = std::clamp(4.0 * (1.0 - r), 0.0, 1.0);
        }
    }
    return matte;
}

// --- HTTP backends ---

namespace {

std::string image_to_b64(const Image& img) {
    return base64_encode(encode_png(img));
}

Image image_from_b64(const std::string& b64) {
    return decode_png(base64_decode(b64));
}

} // namespace

HttpGenerator::HttpGenerator(const std::string& base_url, int timeout_seconds)
    : base_url_(base_url), timeout_seconds_(timeout_seconds) {}

std::string HttpGenerator::backend_id() const { return "http:" + base_url_; }

Image HttpGenerator::generate(const GenerationRequest& request) {
    httplib::Client cli(base_url_);
    cli.set_connection_timeout(timeout_seconds_);
    cli.set_read_timeout(timeout_seconds_);

    json body{{"prompt", request.prompt},
              {"negative_prompt", request.negative_prompt},
              {"width", request.width},
              {"height", request.height},
              {"seed", request.seed},
              {"identity", request.identity_key}};
    if (request.conditioning != nullptr) {
        body["edge_map"] = image_to_b64(request.conditioning->edge_map);
        json poses = json::array();
        for (const auto& p : request.conditioning->pose_maps) {
            poses.push_back(image_to_b64(p));
        }
        body["pose_maps"] = poses;
    }
    if (!request.options.empty()) {
        body["options"] = request.options;
    }

    auto res = cli.Post("/generate", body.dump(), "application/json");
    if (!res) {
        throw GenerationError("generator unreachable: " + base_url_, true);
    }
    if (res->status != 200) {
        throw GenerationError("generator returned status " + std::to_string(res->status),
                              res->status >= 500);
    }
    try {
        const json reply = json::parse(res->body);
        return image_from_b64(reply.at("image").get<std::string>());
    } catch (const std::exception& e) {
        throw BackendContractError(std::string("malformed generator reply: ") + e.what());
    }
}

HttpSegmenter::HttpSegmenter(const std::string& base_url, int timeout_seconds)
    : base_url_(base_url), timeout_seconds_(timeout_seconds) {}

std::string HttpSegmenter::backend_id() const { return "http:" + base_url_; }

Matte HttpSegmenter::segment(const Image& image) {
    httplib::Client cli(base_url_);
    cli.set_connection_timeout(timeout_seconds_);
    cli.set_read_timeout(timeout_seconds_);
    json body{{"image", image_to_b64(image)}};
    auto res = cli.Post("/segment", body.dump(), "application/json");
    if (!res || res->status != 200) {
        throw SegmentationError("segmenter failed: " + base_url_);
    }
    try {
        const json reply = json::parse(res->body);
        const Image m = image_from_b64(reply.at("matte").get<std::string>());
        if (m.channels != 1 || m.width != image.width || m.height != image.height) {
            throw Error("matte shape mismatch");
        }
        Matte matte(m.width, m.height);
        for (int y = 0; y < m.height; ++y) {
            for (int x = 0; x < m.width; ++x) {
                matte.at(x, y) = m.at(x, y, 0) / 255.0;
            }
        }
        return matte;
    } catch (const std::exception& e) {
        throw SegmentationError(std::string("malformed segmenter reply: ") + e.what());
    }
}

std::unique_ptr<GeneratorClient> make_generator(const std::string& backend_spec) {
    if (backend_spec == "mock") {
        return std::make_unique<MockGenerator>();
    }
    if (backend_spec.rfind("http:", 0) == 0) {
        std::string url = backend_spec.substr(5);
        if (url.rfind("http", 0) != 0) {
            url = "http://" + url;
        }
        return std::make_unique<HttpGenerator>(url);
    }
    throw Error("unknown generator backend: " + backend_spec);
}

std::unique_ptr<SegmenterClient> make_segmenter(const std::string& backend_spec) {
    if (backend_spec == "mock") {
        return std::make_unique<MockSegmenter>();
    }
    if (backend_spec.rfind("http:", 0) == 0) {
        std::string url = backend_spec.substr(5);
        if (url.rfind("http", 0) != 0) {
            url = "http://" + url;
        }
        return std::make_unique<HttpSegmenter>(url);
    }
    throw Error("unknown segmenter backend: " + backend_spec);
}

// --- pipeline operations ---

Canvas synthesize_canvas(const forge::CharacterPrompt& prompt,
                         const ConditioningBundle& conditioning, GeneratorClient& client,
                         std::uint64_t seed) {
    GenerationRequest request;
    request.prompt = prompt.text;
    request.negative_prompt = "blurry, deformed, extra limbs, watermark";
    request.width = conditioning.edge_map.width;
    request.height = conditioning.edge_map.height;
    request.conditioning = &conditioning;
    request.seed = seed;
    request.identity_key = prompt.identity_id;

    Image img = client.generate(request);
    if (img.width != request.width || img.height != request.height || img.channels != 3) {
        throw BackendContractError(
            "backend returned " + std::to_string(img.width) + "x" + std::to_string(img.height) +
            "x" + std::to_string(img.channels) + ", expected " + std::to_string(request.width) +
            "x" + std::to_string(request.height) + "x3");
    }
    Canvas canvas;
    canvas.identity_id = prompt.identity_id;
    canvas.image = std::move(img);
    canvas.metadata = GeneratorMetadata{client.backend_id(), seed};
    return canvas;
}

std::vector<ImageSample> crop_grid(const Canvas& canvas, const GridSpec& grid,
                                   forge::LightingTag lighting) {
    grid.validate();
    if (canvas.image.width != grid.canvas_width() ||
        canvas.image.height != grid.canvas_height()) {
        throw GridError("canvas " + std::to_string(canvas.image.width) + "x" +
                        std::to_string(canvas.image.height) + " does not match grid extent " +
                        std::to_string(grid.canvas_width()) + "x" +
                        std::to_string(grid.canvas_height()));
    }
    std::vector<ImageSample> samples;
    samples.reserve(grid.cells());
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            ImageSample s;
            s.identity_id = canvas.identity_id;
            s.view_index = r * grid.cols + c;
            s.lighting = lighting;
            s.image = Image(grid.cell_width, grid.cell_height, canvas.image.channels);
            for (int y = 0; y < grid.cell_height; ++y) {
                for (int x = 0; x < grid.cell_width; ++x) {
                    for (int ch = 0; ch < canvas.image.channels; ++ch) {
                        s.image.at(x, y, ch) = canvas.image.at(c * grid.cell_width + x,
                                                               r * grid.cell_height + y, ch);
                    }
                }
            }
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

Matte segment_foreground(const ImageSample& sample, SegmenterClient& segmenter) {
    Matte matte = segmenter.segment(sample.image);
    if (matte.width != sample.image.width || matte.height != sample.image.height) {
        throw SegmentationError("matte dimensions do not match sample");
    }
    for (double a : matte.alpha) {
        if (a < 0.0 || a > 1.0) {
            throw SegmentationError("matte values outside [0,1]");
        }
    }
    return matte;
}

ImageSample composite_foreground(const ImageSample& sample, const Matte& matte,
                                 const Background& background) {
    if (background.lighting != sample.lighting) {
        throw LightingMismatchError(std::string("background lighting ") +
                                    forge::to_string(background.lighting) +
                                    " does not match sample lighting " +
                                    forge::to_string(sample.lighting));
    }
    if (matte.width != sample.image.width || matte.height != sample.image.height) {
        throw ShapeError("matte dimensions do not match sample");
    }
    const Image bg = center_crop_resize(background.image, sample.image.width,
                                        sample.image.height);
    ImageSample out = sample;
    out.scene = background.scene;
    for (int y = 0; y < sample.image.height; ++y) {
        for (int x = 0; x < sample.image.width; ++x) {
            const double a = matte.at(x, y);
            for (int c = 0; c < 3; ++c) {
                const double fg = sample.image.at(x, y, c);
                const double b = bg.at(x, y, c);
                out.image.at(x, y, c) =
                    static_cast<std::uint8_t>(std::lround(a * fg + (1.0 - a) * b));
            }
        }
    }
    return out;
}

DatasetManifest build_dataset_manifest(const std::vector<ImageSample>& samples) {
    if (samples.empty()) {
        throw EmptyDatasetError("cannot build a manifest from zero samples");
    }
    std::set<int> ids;
    for (const auto& s : samples) {
        ids.insert(s.identity_id);
    }
    std::map<int, int> relabel;
    int next = 0;
    for (int id : ids) {
        relabel[id] = next++;
    }

    DatasetManifest manifest;
    manifest.num_identities = next;
    for (const auto& s : samples) {
        ManifestEntry e;
        e.path = s.source_path;
        e.identity_id = relabel.at(s.identity_id);
        e.view_index = s.view_index;
        e.lighting = s.lighting;
        e.scene = s.scene;
        manifest.entries.push_back(std::move(e));
        manifest.counts[relabel.at(s.identity_id)] += 1;
    }
    std::sort(manifest.entries.begin(), manifest.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) {
                  if (a.identity_id != b.identity_id) return a.identity_id < b.identity_id;
                  if (a.view_index != b.view_index) return a.view_index < b.view_index;
                  return a.path < b.path;
              });
    return manifest;
}

std::string manifest_to_json(const DatasetManifest& manifest) {
    json images = json::array();
    for (const auto& e : manifest.entries) {
        images.push_back(json{{"path", e.path},
                              {"identity", e.identity_id},
                              {"view", e.view_index},
                              {"lighting", forge::to_string(e.lighting)},
                              {"scene", forge::to_string(e.scene)}});
    }
    json counts = json::object();
    for (const auto& [id, n] : manifest.counts) {
        counts[std::to_string(id)] = n;
    }
    const json root{{"images", images},
                    {"num_identities", manifest.num_identities},
                    {"num_images", manifest.entries.size()},
                    {"counts", counts}};
    return root.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
    const json root = json::parse(text);
    DatasetManifest manifest;
    manifest.num_identities = root.at("num_identities");
    for (const auto& j : root.at("images")) {
        ManifestEntry e;
        e.path = j.at("path");
        e.identity_id = j.at("identity");
        e.view_index = j.at("view");
        e.lighting = forge::parse_lighting_tag(j.at("lighting"));
        e.scene = forge::parse_scene_category(j.at("scene"));
        manifest.entries.push_back(std::move(e));
    }
    for (const auto& [key, val] : root.at("counts").items()) {
        manifest.counts[std::stoi(key)] = val;
    }
    return manifest;
}

std::string sample_filename(int identity_id, int view_index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%05d_%02d.png", identity_id, view_index);
    return buf;
}

const Background& BackgroundPool::pick(forge::LightingTag lighting, std::uint64_t key) const {
    const auto it = by_lighting.find(lighting);
    if (it == by_lighting.end() || it->second.empty()) {
        throw Error(std::string("no backgrounds for lighting ") + forge::to_string(lighting));
    }
    return it->second[mix_seed(key, 0x5ce7) % it->second.size()];
}

BackgroundPool build_background_pool(GeneratorClient& client, int per_lighting, int width,
                                     int height, std::uint64_t seed) {
    if (per_lighting < 1) {
        throw RangeError("need at least one background per lighting condition");
    }
    static const forge::LightingTag kTags[] = {forge::LightingTag::day_sunshine,
                                               forge::LightingTag::dusk,
                                               forge::LightingTag::night_dark};
    static const forge::SceneCategory kScenes[] = {
        forge::SceneCategory::street,      forge::SceneCategory::commercial,
        forge::SceneCategory::park,        forge::SceneCategory::field,
        forge::SceneCategory::residential, forge::SceneCategory::indoor};

    BackgroundPool pool;
    for (const auto tag : kTags) {
        for (int i = 0; i < per_lighting; ++i) {
            const auto scene = kScenes[i % 6];
            const auto prompt = forge::render_scene_prompt(scene, tag);
            GenerationRequest request;
            request.prompt = prompt.text;
            request.width = width;
            request.height = height;
            request.seed = mix_seed(seed, static_cast<std::uint64_t>(i) * 3 +
                                              static_cast<std::uint64_t>(tag));
            Background bg;
            bg.image = client.generate(request);
            bg.lighting = tag;
            bg.scene = scene;
            pool.by_lighting[tag].push_back(std::move(bg));
        }
    }
    return pool;
}

std::vector<ImageSample> synthesize_identity_samples(
    const forge::IdentitySpec& spec, const GridSpec& grid,
    const ConditioningBundle& conditioning, GeneratorClient& generator,
    SegmenterClient& segmenter, const BackgroundPool& backgrounds, std::uint64_t seed,
    int views_per_identity) {
    const auto prompt = forge::render_character_prompt(spec);
    const auto canvas = synthesize_canvas(
        prompt, conditioning, generator,
        mix_seed(seed, static_cast<std::uint64_t>(spec.identity_id)));
    auto samples = crop_grid(canvas, grid, spec.lighting);
    if (views_per_identity > 0 && views_per_identity < static_cast<int>(samples.size())) {
        samples.resize(static_cast<std::size_t>(views_per_identity));
    }
    for (auto& sample : samples) {
        const auto matte = segment_foreground(sample, segmenter);
        const auto& bg = backgrounds.pick(
            sample.lighting,
            mix_seed(seed, (static_cast<std::uint64_t>(spec.identity_id) << 8) ^
                               static_cast<std::uint64_t>(sample.view_index)));
        sample = composite_foreground(sample, matte, bg);
    }
    return samples;
}

} // namespace dppp::synth
