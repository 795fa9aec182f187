#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dppp/orchestration.hpp"
#include "dppp/toydata.hpp"

namespace py = pybind11;
using namespace dppp;
using nn::Mat;

namespace {

Image ndarray_to_image(const py::array_t<std::uint8_t>& array) {
    const auto buf = array.request();
    if (buf.ndim != 3 || (buf.shape[2] != 1 && buf.shape[2] != 3)) {
        throw ShapeError("expected an (H, W, C) uint8 array with C in {1, 3}");
    }
    Image img(static_cast<int>(buf.shape[1]), static_cast<int>(buf.shape[0]),
              static_cast<int>(buf.shape[2]));
    auto view = array.unchecked<3>();
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                img.at(x, y, c) = view(y, x, c);
            }
        }
    }
    return img;
}

py::array_t<std::uint8_t> image_to_ndarray(const Image& img) {
    py::array_t<std::uint8_t> out({img.height, img.width, img.channels});
    auto view = out.mutable_unchecked<3>();
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                view(y, x, c) = img.at(x, y, c);
            }
        }
    }
    return out;
}

py::dict spec_to_dict(const forge::IdentitySpec& s) {
    auto garment = [](const forge::GarmentChoice& g) {
        py::dict d;
        d["color"] = g.color;
        d["pattern"] = g.pattern;
        d["style"] = g.style;
        return d;
    };
    py::dict d;
    d["identity_id"] = s.identity_id;
    d["gender"] = s.gender;
    d["action"] = s.action;
    d["upper"] = garment(s.upper);
    d["lower"] = garment(s.lower);
    d["footwear"] = garment(s.footwear);
    d["body_shape"] = s.body_shape;
    py::dict hair;
    hair["color"] = s.hair.color;
    hair["length"] = s.hair.length;
    hair["texture"] = s.hair.texture;
    hair["arrangement"] = s.hair.arrangement;
    hair["bangs"] = s.hair.bangs;
    d["hair"] = hair;
    d["skin_tone"] = s.skin_tone;
    d["lighting"] = forge::to_string(s.lighting);
    return d;
}

forge::IdentitySpec spec_from_dict(const py::dict& d) {
    auto garment = [](const py::dict& g) {
        return forge::GarmentChoice{g["color"].cast<std::string>(),
                                    g["pattern"].cast<std::string>(),
                                    g["style"].cast<std::string>()};
    };
    forge::IdentitySpec s;
    s.identity_id = d["identity_id"].cast<int>();
    s.gender = d["gender"].cast<std::string>();
    s.action = d["action"].cast<std::string>();
    s.upper = garment(d["upper"].cast<py::dict>());
    s.lower = garment(d["lower"].cast<py::dict>());
    s.footwear = garment(d["footwear"].cast<py::dict>());
    s.body_shape = d["body_shape"].cast<std::string>();
    const auto hair = d["hair"].cast<py::dict>();
    s.hair = forge::HairChoice{hair["color"].cast<std::string>(),
                               hair["length"].cast<std::string>(),
                               hair["texture"].cast<std::string>(),
                               hair["arrangement"].cast<std::string>(),
                               hair["bangs"].cast<std::string>()};
    s.skin_tone = d["skin_tone"].cast<std::string>();
    s.lighting = forge::parse_lighting_tag(d["lighting"].cast<std::string>());
    return s;
}

} // namespace

PYBIND11_MODULE(_dppp, m) {
    m.doc() = "Prompt-driven pedestrian dataset factory and de-stylization trainer";

    // --- prompt forge ---
    m.def("default_catalog_json", &forge::default_catalog_json,
          "The embedded attribute catalog as a JSON string");
    m.def(
        "generate_identity_specs",
        [](int count, std::uint64_t seed, const std::string& catalog_path) {
            const auto& catalog = catalog_path.empty()
                                      ? forge::default_catalog()
                                      : forge::load_attribute_catalog(catalog_path);
            const auto specs = forge::generate_identity_specs(
                catalog, static_cast<std::uint64_t>(count), seed);
            py::list out;
            for (const auto& s : specs) out.append(spec_to_dict(s));
            return out;
        },
        py::arg("count"), py::arg("seed"), py::arg("catalog_path") = "");
    m.def(
        "render_character_prompt",
        [](const py::dict& spec) {
            return forge::render_character_prompt(spec_from_dict(spec)).text;
        },
        py::arg("spec"));
    m.def(
        "render_scene_prompt",
        [](const std::string& category, const std::string& lighting) {
            return forge::render_scene_prompt(forge::parse_scene_category(category),
                                              forge::parse_lighting_tag(lighting))
                .text;
        },
        py::arg("category"), py::arg("lighting"));

    // --- losses ---
    m.def(
        "supcon_loss",
        [](const Mat& img, const Mat& txt, const std::vector<int>& labels, double tau) {
            return train::supcon_loss(nn::constant(img), nn::constant(txt), labels, tau)
                ->value(0, 0);
        },
        py::arg("image_features"), py::arg("text_features"), py::arg("labels"),
        py::arg("tau") = 0.07);
    m.def(
        "batch_hard_triplet_loss",
        [](const Mat& feats, const std::vector<int>& labels, double margin) {
            return nn::batch_hard_triplet(nn::constant(feats), labels, margin)->value(0, 0);
        },
        py::arg("features"), py::arg("labels"), py::arg("margin") = 0.3);
    m.def(
        "id_loss",
        [](const Mat& logits, const std::vector<int>& labels, double label_smoothing) {
            return train::id_loss(nn::constant(logits), labels, label_smoothing)->value(0, 0);
        },
        py::arg("logits"), py::arg("labels"), py::arg("label_smoothing") = 0.1);
    m.def(
        "style_attention",
        [](const Mat& style_feats, const Mat& global_feat) {
            return train::compute_style_attention(nn::constant(style_feats),
                                                  nn::constant(global_feat))
                ->value;
        },
        py::arg("style_features"), py::arg("global_feature"));
    m.def(
        "topk_indices",
        [](const Mat& weights, int k) { return train::topk_indices(weights, k); },
        py::arg("weights"), py::arg("k"));

    // --- retrieval metrics ---
    m.def(
        "rank_gallery",
        [](const Mat& query, const Mat& gallery) { return eval::rank(query, gallery); },
        py::arg("query_feature"), py::arg("gallery_features"));
    m.def(
        "evaluate_retrieval",
        [](const Mat& query_feats, const std::vector<int>& query_ids, const Mat& gallery_feats,
           const std::vector<int>& gallery_ids, const std::vector<int>& query_cams,
           const std::vector<int>& gallery_cams) {
            eval::QueryGallerySplit split;
            for (std::size_t i = 0; i < query_ids.size(); ++i) {
                split.query.push_back(
                    {query_ids[i], query_cams.empty() ? -1 : query_cams[i]});
            }
            for (std::size_t i = 0; i < gallery_ids.size(); ++i) {
                split.gallery.push_back(
                    {gallery_ids[i], gallery_cams.empty() ? -1 : gallery_cams[i]});
            }
            std::vector<std::vector<int>> rankings;
            for (Eigen::Index i = 0; i < query_feats.rows(); ++i) {
                rankings.push_back(eval::rank(query_feats.row(i), gallery_feats));
            }
            const auto report = eval::compute_map_cmc(split, rankings);
            py::dict out;
            out["mAP"] = report.map;
            out["rank1"] = report.rank1;
            out["rank5"] = report.rank5;
            out["cmc"] = report.cmc;
            out["skipped_queries"] = report.skipped_queries;
            return out;
        },
        py::arg("query_features"), py::arg("query_ids"), py::arg("gallery_features"),
        py::arg("gallery_ids"), py::arg("query_cams") = std::vector<int>{},
        py::arg("gallery_cams") = std::vector<int>{});
    m.def(
        "distance_histogram",
        [](const Mat& a, const Mat& b, long pairs, std::uint64_t seed, int bins) {
            const auto hist = eval::distance_distribution(a, b, pairs, seed, bins);
            py::dict out;
            out["edges"] = hist.edges;
            out["counts"] = hist.counts;
            out["mean"] = hist.mean;
            return out;
        },
        py::arg("features_a"), py::arg("features_b"), py::arg("pairs") = 10000,
        py::arg("seed") = 0, py::arg("bins") = 50);
    m.def("parse_market_filename", [](const std::string& name) -> py::object {
        const auto item = eval::parse_market_filename(name);
        if (!item) return py::none();
        py::dict out;
        out["identity"] = item->identity;
        out["camera"] = item->camera;
        return out;
    });

    // --- pixel operations ---
    m.def(
        "composite",
        [](const py::array_t<std::uint8_t>& fg, const py::array_t<double>& matte,
           const py::array_t<std::uint8_t>& bg) {
            synth::ImageSample sample;
            sample.image = ndarray_to_image(fg);
            synth::Background background;
            background.image = ndarray_to_image(bg);
            const auto mbuf = matte.request();
            if (mbuf.ndim != 2) throw ShapeError("matte must be 2-D");
            Matte m(static_cast<int>(mbuf.shape[1]), static_cast<int>(mbuf.shape[0]));
            auto view = matte.unchecked<2>();
            for (int y = 0; y < m.height; ++y) {
                for (int x = 0; x < m.width; ++x) {
                    m.at(x, y) = view(y, x);
                }
            }
            return image_to_ndarray(synth::composite_foreground(sample, m, background).image);
        },
        py::arg("foreground"), py::arg("matte"), py::arg("background"));
    m.def(
        "contrast_augment",
        [](const py::array_t<std::uint8_t>& img, double lo, double hi, std::uint64_t seed) {
            return image_to_ndarray(run::contrast_augment(ndarray_to_image(img), lo, hi, seed));
        },
        py::arg("image"), py::arg("lo") = 0.5, py::arg("hi") = 1.5, py::arg("seed") = 0);
    m.def(
        "build_toy_dataset",
        [](int identities, int views, std::uint64_t seed) {
            const auto data = toy::build_toy_dataset(identities, views, seed);
            py::list images;
            py::list ids;
            for (std::size_t i = 0; i < data.images.size(); ++i) {
                images.append(image_to_ndarray(data.images[i]));
                ids.append(data.manifest.entries[i].identity_id);
            }
            py::dict out;
            out["images"] = images;
            out["identities"] = ids;
            return out;
        },
        py::arg("identities"), py::arg("views"), py::arg("seed") = 0);

    // --- stages ---
    m.def(
        "run_forge", [](const std::string& config_json) {
            run::run_forge(run::RunConfig::from_json(config_json));
        },
        py::arg("config_json"));
    m.def(
        "run_synth",
        [](const std::string& config_json, const std::string& specs_path) {
            run::run_synth(run::RunConfig::from_json(config_json), specs_path);
        },
        py::arg("config_json"), py::arg("specs_path") = "");
    m.def(
        "run_train",
        [](const std::string& config_json, const std::string& stage,
           const std::string& data_dir) {
            const auto config = run::RunConfig::from_json(config_json);
            if (stage == "2a") {
                run::run_train_stage2a(config, data_dir);
            } else if (stage == "2b") {
                run::run_train_stage2b(config, data_dir);
            } else {
                throw Error("unknown stage: " + stage);
            }
        },
        py::arg("config_json"), py::arg("stage"), py::arg("data_dir") = "");
    m.def(
        "run_eval",
        [](const std::string& config_json, const std::string& query_dir,
           const std::string& gallery_dir, const std::string& checkpoint,
           const std::string& report_path) {
            run::EvalOptions opts;
            opts.query_dir = query_dir;
            opts.gallery_dir = gallery_dir;
            opts.checkpoint = checkpoint;
            opts.report_path = report_path;
            const auto report = run::run_eval(run::RunConfig::from_json(config_json), opts);
            py::dict out;
            out["mAP"] = report.map;
            out["rank1"] = report.rank1;
            out["rank5"] = report.rank5;
            return out;
        },
        py::arg("config_json"), py::arg("query_dir"), py::arg("gallery_dir"),
        py::arg("checkpoint") = "", py::arg("report_path") = "");
    m.def("default_config_json",
          []() { return run::RunConfig::defaults().to_json(); });

    m.attr("__version__") = "0.1.0";
}
