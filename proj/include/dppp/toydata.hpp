#pragma once

#include "dppp/synthesis.hpp"

namespace dppp::toy {

// In-memory dataset produced by the mock pipeline; images align with
// manifest.entries.
struct ToyDataset {
    synth::DatasetManifest manifest;
    std::vector<Image> images;
};

// Runs forge -> conditioning -> mock generation -> crop -> segment ->
// composite entirely in memory. views_per_id <= grid cell budget (2 x 5).
ToyDataset build_toy_dataset(int num_identities, int views_per_identity, std::uint64_t seed);

// Deterministic per-domain style injection (channel tint, contrast and
// brightness shift). Domain 0 is a no-op.
Image apply_style_transform(const Image& image, int domain);

} // namespace dppp::toy
