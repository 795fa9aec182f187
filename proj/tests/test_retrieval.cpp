#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dppp/retrieval.hpp"

using namespace dppp;
using namespace dppp::eval;
using nn::Mat;

namespace {

// Independent AP/CMC reference: builds explicit relevance lists, then applies
// the textbook definitions.
struct RefResult {
    double map = 0.0;
    std::vector<double> cmc;
    int skipped = 0;
};

RefResult reference_map_cmc(const QueryGallerySplit& split,
                            const std::vector<std::vector<int>>& rankings) {
    RefResult out;
    out.cmc.assign(split.gallery.size(), 0.0);
    std::vector<double> aps;
    for (std::size_t qi = 0; qi < split.query.size(); ++qi) {
        const auto& q = split.query[qi];
        std::vector<int> relevance;
        for (const int gi : rankings[qi]) {
            const auto& g = split.gallery[static_cast<std::size_t>(gi)];
            if (g.identity == -1) continue;
            if (q.camera >= 0 && g.camera >= 0 && g.identity == q.identity &&
                g.camera == q.camera)
                continue;
            relevance.push_back(g.identity == q.identity ? 1 : 0);
        }
        const int total_rel = std::accumulate(relevance.begin(), relevance.end(), 0);
        if (total_rel == 0) {
            ++out.skipped;
            continue;
        }
        double ap = 0.0;
        int seen = 0;
        for (std::size_t r = 0; r < relevance.size(); ++r) {
            if (relevance[r] == 1) {
                ++seen;
                ap += static_cast<double>(seen) / static_cast<double>(r + 1);
            }
        }
        aps.push_back(ap / total_rel);
        for (std::size_t r = 0; r < relevance.size(); ++r) {
            if (relevance[r] == 1) {
                for (std::size_t rr = r; rr < out.cmc.size(); ++rr) out.cmc[rr] += 1.0;
                break;
            }
        }
    }
    if (!aps.empty()) {
        out.map = std::accumulate(aps.begin(), aps.end(), 0.0) / aps.size();
        for (auto& v : out.cmc) v /= static_cast<double>(aps.size());
    }
    return out;
}

Mat random_feats(Rng& rng, int rows, int cols) {
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
    return m;
}

} // namespace

TEST_CASE("rank puts an exact copy of the query first and ignores scale") {
    Rng rng(1);
    Mat gallery = random_feats(rng, 10, 6);
    Mat query = gallery.row(4);
    auto order = rank(query, gallery);
    CHECK(order[0] == 4);
    auto scaled = rank(Mat(3.5 * query), gallery);
    CHECK(order == scaled);
}

TEST_CASE("rank matches a brute-force pairwise similarity sort on 100 instances") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        Mat gallery = random_feats(rng, 12, 5);
        Mat query = random_feats(rng, 1, 5);
        const auto order = rank(query, gallery);
        // brute force: compute similarities, repeatedly take the best
        std::vector<double> sims(12);
        for (int j = 0; j < 12; ++j) {
            sims[static_cast<std::size_t>(j)] =
                query.row(0).dot(gallery.row(j)) / (query.row(0).norm() * gallery.row(j).norm());
        }
        std::vector<bool> used(12, false);
        for (int pos = 0; pos < 12; ++pos) {
            int best = -1;
            for (int j = 0; j < 12; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                if (best < 0 || sims[static_cast<std::size_t>(j)] > sims[static_cast<std::size_t>(best)]) best = j;
            }
            used[static_cast<std::size_t>(best)] = true;
            REQUIRE(order[static_cast<std::size_t>(pos)] == best);
        }
    }
}

TEST_CASE("rank rejects an empty gallery") {
    CHECK_THROWS_AS(rank(Mat::Ones(1, 3), Mat(0, 3)), EmptyGalleryError);
}

TEST_CASE("AP of ranked relevance [1,0,1] is 5/6") {
    QueryGallerySplit split;
    split.query = {{7, -1}};
    split.gallery = {{7, -1}, {3, -1}, {7, -1}};
    const auto report = compute_map_cmc(split, {{0, 1, 2}});
    CHECK(report.map == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
    CHECK(report.rank1 == 1.0);
}

TEST_CASE("perfect ranking gives mAP = rank1 = 1") {
    QueryGallerySplit split;
    for (int i = 0; i < 5; ++i) split.query.push_back({i, -1});
    for (int i = 0; i < 5; ++i) split.gallery.push_back({i, -1});
    std::vector<std::vector<int>> rankings;
    for (int i = 0; i < 5; ++i) {
        std::vector<int> order = {i};
        for (int j = 0; j < 5; ++j) {
            if (j != i) order.push_back(j);
        }
        rankings.push_back(order);
    }
    const auto report = compute_map_cmc(split, rankings);
    CHECK(report.map == doctest::Approx(1.0));
    CHECK(report.rank1 == doctest::Approx(1.0));
    CHECK(report.rank5 == doctest::Approx(1.0));
}

TEST_CASE("metrics equal the brute-force reference on 200 random splits") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        QueryGallerySplit split;
        const int nq = 2 + static_cast<int>(rng.uniform_int(0, 18));
        const int ng = 5 + static_cast<int>(rng.uniform_int(0, 45));
        const bool cams = rng.uniform_int(0, 1) == 1;
        for (int i = 0; i < nq; ++i) {
            split.query.push_back({static_cast<int>(rng.uniform_int(0, 6)),
                                   cams ? static_cast<int>(rng.uniform_int(0, 2)) : -1});
        }
        for (int i = 0; i < ng; ++i) {
            // occasional -1 distractor entries
            const int id = rng.uniform_int(0, 9) == 0
                               ? -1
                               : static_cast<int>(rng.uniform_int(0, 6));
            split.gallery.push_back({id, cams ? static_cast<int>(rng.uniform_int(0, 2)) : -1});
        }
        std::vector<std::vector<int>> rankings;
        for (int i = 0; i < nq; ++i) {
            std::vector<int> order(static_cast<std::size_t>(ng));
            std::iota(order.begin(), order.end(), 0);
            rng.shuffle(order.begin(), order.end());
            rankings.push_back(order);
        }
        const auto report = compute_map_cmc(split, rankings);
        const auto ref = reference_map_cmc(split, rankings);
        REQUIRE(std::abs(report.map - ref.map) < 1e-9);
        REQUIRE(report.skipped_queries == ref.skipped);
        for (std::size_t r = 0; r < ref.cmc.size(); ++r) {
            REQUIRE(std::abs(report.cmc[r] - ref.cmc[r]) < 1e-9);
        }
    }
}

TEST_CASE("promoting a relevant item never decreases AP") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        QueryGallerySplit split;
        split.query = {{1, -1}};
        const int ng = 6 + static_cast<int>(rng.uniform_int(0, 10));
        for (int i = 0; i < ng; ++i) {
            split.gallery.push_back({static_cast<int>(rng.uniform_int(0, 2)), -1});
        }
        std::vector<int> order(static_cast<std::size_t>(ng));
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order.begin(), order.end());

        // find a relevant item not already at the front and swap it one slot up
        int pos = -1;
        for (int p = 1; p < ng; ++p) {
            if (split.gallery[static_cast<std::size_t>(order[static_cast<std::size_t>(p)])]
                    .identity == 1) {
                pos = p;
                break;
            }
        }
        if (pos < 0) continue;
        const auto before = compute_map_cmc(split, {order});
        std::swap(order[static_cast<std::size_t>(pos)],
                  order[static_cast<std::size_t>(pos - 1)]);
        const auto after = compute_map_cmc(split, {order});
        if (before.per_query_ap.empty()) continue;
        REQUIRE(after.map >= before.map - 1e-12);
    }
}

TEST_CASE("cmc curve is non-decreasing in rank") {
    Rng rng(5);
    QueryGallerySplit split;
    for (int i = 0; i < 10; ++i) split.query.push_back({i % 4, -1});
    for (int i = 0; i < 30; ++i) split.gallery.push_back({static_cast<int>(rng.uniform_int(0, 4)), -1});
    std::vector<std::vector<int>> rankings;
    for (int i = 0; i < 10; ++i) {
        std::vector<int> order(30);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order.begin(), order.end());
        rankings.push_back(order);
    }
    const auto report = compute_map_cmc(split, rankings);
    for (std::size_t r = 1; r < report.cmc.size(); ++r) {
        CHECK(report.cmc[r] >= report.cmc[r - 1]);
    }
    CHECK(report.rank1 <= report.rank5);
}

TEST_CASE("same-camera matches are junk under the market protocol") {
    QueryGallerySplit split;
    split.query = {{1, 0}};
    // the only same-id entry shares the camera -> excluded -> no positives
    split.gallery = {{1, 0}, {2, 1}, {3, 1}};
    const auto report = compute_map_cmc(split, {{0, 1, 2}});
    CHECK(report.skipped_queries == 1);
    CHECK(report.per_query_ap.empty());

    // cross-camera copy counts
    split.gallery = {{1, 0}, {1, 1}, {3, 1}};
    const auto ok = compute_map_cmc(split, {{0, 1, 2}});
    CHECK(ok.skipped_queries == 0);
    CHECK(ok.map == doctest::Approx(1.0)); // junk removed before ranking positions
}

TEST_CASE("distance histogram: counts sum to num_pairs; degenerate case lands in bin 0") {
    Rng rng(6);
    Mat a = random_feats(rng, 7, 4);
    Mat b = random_feats(rng, 9, 4);
    const auto hist = distance_distribution(a, b, 10000, 42, 20);
    long total = 0;
    for (long c : hist.counts) total += c;
    CHECK(total == 10000);
    CHECK(hist.edges.size() == 21);

    Mat single = Mat::Ones(1, 4);
    const auto degenerate = distance_distribution(single, single, 500, 1, 8);
    CHECK(degenerate.counts[0] == 500);
    for (std::size_t i = 1; i < degenerate.counts.size(); ++i) {
        CHECK(degenerate.counts[i] == 0);
    }
    CHECK(degenerate.mean == doctest::Approx(0.0));

    CHECK_THROWS_AS(distance_distribution(a, b, 100, 1, 0), RangeError);
    CHECK_THROWS_AS(distance_distribution(Mat(0, 4), b, 100, 1, 4), EmptyGalleryError);
}

TEST_CASE("histogram sampling is deterministic per seed") {
    Rng rng(7);
    Mat a = random_feats(rng, 5, 3);
    Mat b = random_feats(rng, 5, 3);
    const auto h1 = distance_distribution(a, b, 1000, 9, 10);
    const auto h2 = distance_distribution(a, b, 1000, 9, 10);
    CHECK(h1.counts == h2.counts);
    const auto h3 = distance_distribution(a, b, 1000, 10, 10);
    CHECK(h1.counts != h3.counts);
}

TEST_CASE("market filenames parse into identity and camera") {
    auto item = parse_market_filename("0001_c1s1_001051_00.jpg");
    REQUIRE(item.has_value());
    CHECK(item->identity == 1);
    CHECK(item->camera == 1);

    auto distractor = parse_market_filename("-1_c3s2_000000_00.jpg");
    REQUIRE(distractor.has_value());
    CHECK(distractor->identity == -1);
    CHECK(distractor->camera == 3);

    auto high = parse_market_filename("1501_c6s4_000123_01.png");
    REQUIRE(high.has_value());
    CHECK(high->identity == 1501);
    CHECK(high->camera == 6);

    CHECK_FALSE(parse_market_filename("notaname.jpg").has_value());
    CHECK_FALSE(parse_market_filename("0001_x1.jpg").has_value());
}

TEST_CASE("extract_content_feature equals destylize-then-normalize and is unit length") {
    const auto cfg = enc::EncoderConfig::toy();
    enc::VisionTextEncoder encoder(cfg, 3);
    Rng rng(8);
    train::DestylizationProjector projector(rng, cfg.d1);

    Rng img_rng(9);
    Image img(128, 256, 3);
    for (auto& px : img.pixels) px = static_cast<std::uint8_t>(img_rng.uniform_int(0, 255));

    const Mat feat = extract_content_feature(img, encoder, projector);
    CHECK(std::abs(feat.norm() - 1.0) < 1e-6);

    const Mat composed = [&] {
        const auto bundle = encoder.encode_image(img);
        Mat vc = train::destylize(projector, bundle.global)->value;
        return Mat(vc / vc.norm());
    }();
    CHECK((feat - composed).cwiseAbs().maxCoeff() < 1e-9);

    // batch-of-1 equals the batched row
    const Mat batched = extract_content_features({img}, encoder, projector);
    CHECK(batched.row(0) == feat.row(0));
}
