#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dppp/disentangle.hpp"
#include "dppp/encoder.hpp"

namespace dppp::eval {

class EmptyGalleryError : public Error {
public:
    using Error::Error;
};

// camera < 0 means "no camera annotation" (synthetic data).
struct RetrievalItem {
    int identity = 0;
    int camera = -1;
};

struct QueryGallerySplit {
    std::vector<RetrievalItem> query;
    std::vector<RetrievalItem> gallery;
};

struct EvalReport {
    double map = 0.0;
    double rank1 = 0.0;
    double rank5 = 0.0;
    std::vector<double> per_query_ap; // counted queries only, in query order
    std::vector<double> cmc;          // cmc[r-1] = P(correct match in top r)
    int skipped_queries = 0;          // queries with zero valid positives
    double runtime_seconds = 0.0;
};

struct Histogram {
    std::vector<double> edges;  // bins + 1 ascending edges
    std::vector<long> counts;   // size bins; sums to num_pairs
    double mean = 0.0;
};

// Inference-path feature: de-stylized, L2-normalized global feature.
nn::Mat extract_content_feature(const Image& image, const enc::VisionTextEncoder& encoder,
                                train::DestylizationProjector& projector);
nn::Mat extract_content_features(const std::vector<Image>& images,
                                 const enc::VisionTextEncoder& encoder,
                                 train::DestylizationProjector& projector);

// Gallery indices by descending cosine similarity; ties to the lower index.
std::vector<int> rank(const nn::Mat& query_feat, const nn::Mat& gallery_feats);

EvalReport compute_map_cmc(const QueryGallerySplit& split,
                           const std::vector<std::vector<int>>& rankings);

Histogram distance_distribution(const nn::Mat& feats_a, const nn::Mat& feats_b,
                                long num_pairs, std::uint64_t seed, int bins);

std::string histogram_to_json(const Histogram& hist);
std::string report_to_json(const EvalReport& report, const Histogram* hist = nullptr);

// Market-style filename "0001_c1s1_001051_00.jpg" -> {identity 1, camera 1};
// distractors use identity -1. Returns nullopt for non-conforming names.
std::optional<RetrievalItem> parse_market_filename(const std::string& filename);

} // namespace dppp::eval
