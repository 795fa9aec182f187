#include "dppp/retrieval.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "dppp/rng.hpp"

namespace dppp::eval {

using nn::Mat;

Mat extract_content_feature(const Image& image, const enc::VisionTextEncoder& encoder,
                            train::DestylizationProjector& projector) {
    const auto bundle = encoder.encode_image(image);
    const Mat vc = train::destylize(projector, bundle.global)->value;
    const double norm = std::sqrt(vc.squaredNorm() + 1e-24);
    return vc / norm;
}

Mat extract_content_features(const std::vector<Image>& images,
                             const enc::VisionTextEncoder& encoder,
                             train::DestylizationProjector& projector) {
    if (images.empty()) {
        throw EmptyGalleryError("no images to extract");
    }
    Mat out(static_cast<Eigen::Index>(images.size()), encoder.config().d1);
    for (std::size_t i = 0; i < images.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) =
            extract_content_feature(images[i], encoder, projector);
    }
    return out;
}

std::vector<int> rank(const Mat& query_feat, const Mat& gallery_feats) {
    if (gallery_feats.rows() == 0) {
        throw EmptyGalleryError("gallery is empty");
    }
    if (query_feat.rows() != 1 || query_feat.cols() != gallery_feats.cols()) {
        throw ShapeError("query must be 1 x d matching the gallery");
    }
    const double qn = std::sqrt(query_feat.squaredNorm() + 1e-24);
    std::vector<double> sim(static_cast<std::size_t>(gallery_feats.rows()));
    for (Eigen::Index j = 0; j < gallery_feats.rows(); ++j) {
        const double gn = std::sqrt(gallery_feats.row(j).squaredNorm() + 1e-24);
        sim[static_cast<std::size_t>(j)] = query_feat.row(0).dot(gallery_feats.row(j)) / (qn * gn);
    }
    std::vector<int> order(sim.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return sim[static_cast<std::size_t>(a)] > sim[static_cast<std::size_t>(b)];
    });
    return order;
}

EvalReport compute_map_cmc(const QueryGallerySplit& split,
                           const std::vector<std::vector<int>>& rankings) {
    const auto t0 = std::chrono::steady_clock::now();
    if (split.gallery.empty()) {
        throw EmptyGalleryError("gallery is empty");
    }
    if (rankings.size() != split.query.size()) {
        throw ShapeError("one ranking per query required");
    }

    EvalReport report;
    report.cmc.assign(split.gallery.size(), 0.0);
    int counted = 0;
    for (std::size_t qi = 0; qi < split.query.size(); ++qi) {
        const auto& q = split.query[qi];
        const auto& order = rankings[qi];
        if (order.size() != split.gallery.size()) {
            throw ShapeError("ranking must cover the gallery");
        }
        double ap = 0.0;
        int hits = 0;
        int valid_seen = 0;
        int first_hit = -1;
        for (const int gi : order) {
            const auto& g = split.gallery[static_cast<std::size_t>(gi)];
            if (g.identity == -1) {
                continue; // distractor
            }
            // Market protocol: same identity seen by the same camera is junk.
            if (q.camera >= 0 && g.camera >= 0 && g.identity == q.identity &&
                g.camera == q.camera) {
                continue;
            }
            ++valid_seen;
            if (g.identity == q.identity) {
                ++hits;
                ap += static_cast<double>(hits) / valid_seen;
                if (first_hit < 0) {
                    first_hit = valid_seen;
                }
            }
        }
        if (hits == 0) {
            ++report.skipped_queries;
            continue;
        }
        ++counted;
        report.per_query_ap.push_back(ap / hits);
        for (std::size_t r = static_cast<std::size_t>(first_hit) - 1; r < report.cmc.size();
             ++r) {
            report.cmc[r] += 1.0;
        }
    }
    if (counted > 0) {
        report.map = std::accumulate(report.per_query_ap.begin(), report.per_query_ap.end(),
                                     0.0) /
                     counted;
        for (auto& v : report.cmc) {
            v /= counted;
        }
        report.rank1 = report.cmc[0];
        report.rank5 = report.cmc.size() >= 5 ? report.cmc[4] : report.cmc.back();
    }
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

Histogram distance_distribution(const Mat& feats_a, const Mat& feats_b, long num_pairs,
                                std::uint64_t seed, int bins) {
    if (bins < 1) {
        throw RangeError("histogram needs at least one bin");
    }
    if (feats_a.rows() == 0 || feats_b.rows() == 0) {
        throw EmptyGalleryError("both feature sets must be non-empty");
    }
    if (num_pairs < 1) {
        throw RangeError("need at least one pair");
    }
    Rng rng(seed);
    std::vector<double> dist(static_cast<std::size_t>(num_pairs));
    double total = 0.0;
    for (long p = 0; p < num_pairs; ++p) {
        const auto i = rng.uniform_int(0, feats_a.rows() - 1);
        const auto j = rng.uniform_int(0, feats_b.rows() - 1);
        const double d = (feats_a.row(i) - feats_b.row(j)).norm();
        dist[static_cast<std::size_t>(p)] = d;
        total += d;
    }
    const auto [mn_it, mx_it] = std::minmax_element(dist.begin(), dist.end());
    double lo = *mn_it, hi = *mx_it;
    if (hi <= lo) {
        hi = lo + 1.0; // degenerate spread: single occupied bin
    }
    Histogram hist;
    hist.mean = total / static_cast<double>(num_pairs);
    hist.counts.assign(static_cast<std::size_t>(bins), 0);
    const double width = (hi - lo) / bins;
    for (int b = 0; b <= bins; ++b) {
        hist.edges.push_back(lo + b * width);
    }
    for (const double d : dist) {
        int b = static_cast<int>((d - lo) / width);
        b = std::clamp(b, 0, bins - 1); // the max lands in the last bin
        hist.counts[static_cast<std::size_t>(b)] += 1;
    }
    return hist;
}

std::string histogram_to_json(const Histogram& hist) {
    nlohmann::json j{{"edges", hist.edges}, {"counts", hist.counts}, {"mean", hist.mean}};
    return j.dump(2) + "\n";
}

std::string report_to_json(const EvalReport& report, const Histogram* hist) {
    nlohmann::json j{{"mAP", report.map},
                     {"rank1", report.rank1},
                     {"rank5", report.rank5},
                     {"skipped_queries", report.skipped_queries},
                     {"num_queries", report.per_query_ap.size()},
                     {"runtime_seconds", report.runtime_seconds}};
    if (hist != nullptr) {
        j["histogram"] = {{"edges", hist->edges}, {"counts", hist->counts}, {"mean", hist->mean}};
    }
    return j.dump(2) + "\n";
}

std::optional<RetrievalItem> parse_market_filename(const std::string& filename) {
    // e.g. 0001_c1s1_001051_00.jpg and -1_c3s2_000000_00.jpg
    const auto us = filename.find('_');
    if (us == std::string::npos || us + 2 >= filename.size()) {
        return std::nullopt;
    }
    if (filename[us + 1] != 'c') {
        return std::nullopt;
    }
    RetrievalItem item;
    try {
        item.identity = std::stoi(filename.substr(0, us));
    } catch (const std::exception&) {
        return std::nullopt;
    }
    std::size_t pos = us + 2;
    std::size_t len = 0;
    while (pos + len < filename.size() && std::isdigit(static_cast<unsigned char>(filename[pos + len]))) {
        ++len;
    }
    if (len == 0) {
        return std::nullopt;
    }
    item.camera = std::stoi(filename.substr(pos, len));
    return item;
}

} // namespace dppp::eval
