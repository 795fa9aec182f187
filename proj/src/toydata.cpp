#include "dppp/toydata.hpp"

#include <algorithm>
#include <cmath>

#include "dppp/rng.hpp"

namespace dppp::toy {

ToyDataset build_toy_dataset(int num_identities, int views_per_identity, std::uint64_t seed) {
    if (views_per_identity < 1 || views_per_identity > 10) {
        throw RangeError("toy dataset supports 1..10 views per identity");
    }
    const auto specs = forge::generate_identity_specs(
        forge::default_catalog(), static_cast<std::uint64_t>(num_identities), seed);

    synth::GridSpec grid{2, 5, 128, 256};
    synth::MockGenerator generator;
    synth::MockSegmenter segmenter;
    const auto conditioning = synth::build_conditioning(grid, {});
    const auto backgrounds = synth::build_background_pool(generator, 6, grid.cell_width,
                                                          grid.cell_height,
                                                          mix_seed(seed, 0xB6));

    std::vector<synth::ImageSample> samples;
    for (const auto& spec : specs) {
        auto per_id = synth::synthesize_identity_samples(spec, grid, conditioning, generator,
                                                         segmenter, backgrounds, seed,
                                                         views_per_identity);
        samples.insert(samples.end(), per_id.begin(), per_id.end());
    }

    ToyDataset data;
    data.manifest = synth::build_dataset_manifest(samples);
    // manifest is sorted by (identity, view); mirror that order for images
    std::sort(samples.begin(), samples.end(),
              [](const synth::ImageSample& a, const synth::ImageSample& b) {
                  if (a.identity_id != b.identity_id) return a.identity_id < b.identity_id;
                  return a.view_index < b.view_index;
              });
    for (auto& s : samples) {
        data.images.push_back(std::move(s.image));
    }
    return data;
}

Image apply_style_transform(const Image& image, int domain) {
    if (domain == 0) {
        return image;
    }
    // Fixed per-domain parameters; strong enough to move raw features
    // without destroying the identity pattern.
    const double tint[3][3] = {
        {1.00, 1.00, 1.00}, // unused (domain 0)
        {1.25, 0.85, 0.80}, // warm shift
        {0.75, 0.95, 1.30}, // cool shift
    };
    const double contrast[3] = {1.0, 1.35, 0.65};
    const double brightness[3] = {0.0, 20.0, -25.0};
    const int d = std::clamp(domain, 0, 2);

    double mean = 0.0;
    for (const auto px : image.pixels) mean += px;
    mean /= static_cast<double>(image.pixels.size());

    Image out = image;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < image.channels; ++c) {
                double v = image.at(x, y, c);
                v = mean + contrast[d] * (v - mean);
                v = v * tint[d][c % 3] + brightness[d];
                out.at(x, y, c) = static_cast<std::uint8_t>(
                    std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    }
    return out;
}

} // namespace dppp::toy
