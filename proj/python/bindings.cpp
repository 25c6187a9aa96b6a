#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "regionlm/anyres.hpp"
#include "regionlm/eval.hpp"
#include "regionlm/image.hpp"
#include "regionlm/region_model.hpp"
#include "regionlm/roi_align.hpp"
#include "regionlm/tensor.hpp"

namespace py = pybind11;
using namespace regionlm;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int64_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
    return out;
}

MaskImage mask_from_array(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("mask must be a 2-D uint8 array");
    MaskImage m(a.shape(0), a.shape(1));
    for (py::ssize_t i = 0; i < a.size(); ++i) m.bits[static_cast<size_t>(i)] = a.data()[i] ? 1 : 0;
    return m;
}

py::array_t<uint8_t> array_from_mask(const MaskImage& m) {
    py::array_t<uint8_t> out({static_cast<py::ssize_t>(m.height), static_cast<py::ssize_t>(m.width)});
    std::copy(m.bits.begin(), m.bits.end(), out.mutable_data());
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "region-prompted model core: tiling, mask encoding, RoI replay, eval utilities";

    // ---- tensor ops ----
    m.def("matmul", [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return array_from_tensor(matmul(tensor_from_array(a), tensor_from_array(b)));
    });
    m.def("conv2d",
          [](const py::array_t<double>& input, const py::array_t<double>& kernel, int64_t stride,
             int64_t padding) {
              return array_from_tensor(
                  conv2d(tensor_from_array(input), tensor_from_array(kernel), stride, padding));
          },
          py::arg("input"), py::arg("kernel"), py::arg("stride") = 1, py::arg("padding") = 0);

    // ---- imaging ----
    m.def("resize_bilinear", [](const py::array_t<double>& img, int64_t h, int64_t w) {
        return array_from_tensor(resize_bilinear(tensor_from_array(img), h, w));
    });
    m.def("mask_to_bbox", [](const py::array_t<uint8_t>& mask) {
        const BBox b = mask_to_bbox(mask_from_array(mask));
        return py::make_tuple(b.x0, b.y0, b.x1, b.y1);
    });
    m.def("resize_mask_nearest", [](const py::array_t<uint8_t>& mask, int64_t h, int64_t w) {
        return array_from_mask(resize_mask_nearest(mask_from_array(mask), h, w));
    });
    m.def("mask_to_rle", [](const py::array_t<uint8_t>& mask) {
        return mask_to_rle(mask_from_array(mask));
    });
    m.def("mask_from_rle", [](const std::string& rle) {
        return array_from_mask(mask_from_rle(rle));
    });

    // ---- tiling ----
    m.def("plan_tiles",
          [](int64_t h, int64_t w, int64_t tile_side, int64_t budget) {
              const TilePlan p = plan_tiles(h, w, tile_side, budget);
              py::dict d;
              d["grid_rows"] = p.grid_rows;
              d["grid_cols"] = p.grid_cols;
              d["tile_side"] = p.tile_side;
              d["canvas_h"] = p.canvas_h;
              d["canvas_w"] = p.canvas_w;
              return d;
          },
          py::arg("h"), py::arg("w"), py::arg("tile_side") = 336, py::arg("budget") = 16);

    // ---- RoI align ----
    m.def("roi_align",
          [](const py::array_t<double>& fmap, double x0, double y0, double x1, double y1,
             int64_t bins_r, int64_t bins_c, int64_t sampling_ratio, bool aligned) {
              RoiConfig cfg;
              cfg.bins_r = bins_r;
              cfg.bins_c = bins_c;
              cfg.sampling_ratio = sampling_ratio;
              cfg.aligned = aligned;
              return array_from_tensor(
                  roi_align(tensor_from_array(fmap), RoiRect{x0, y0, x1, y1}, cfg));
          },
          py::arg("fmap"), py::arg("x0"), py::arg("y0"), py::arg("x1"), py::arg("y1"),
          py::arg("bins_r") = 16, py::arg("bins_c") = 16, py::arg("sampling_ratio") = 2,
          py::arg("aligned") = true);

    // ---- model ----
    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init([](int64_t patch_size, int64_t embed_dim, int64_t depth, int64_t heads,
                         int64_t tile_side, int64_t budget, int64_t roi_bins) {
                 ModelConfig cfg;
                 cfg.vit.patch_size = patch_size;
                 cfg.vit.embed_dim = embed_dim;
                 cfg.vit.depth = depth;
                 cfg.vit.heads = heads;
                 cfg.tile_side = tile_side;
                 cfg.tile_budget = budget;
                 cfg.roi.bins_r = roi_bins;
                 cfg.roi.bins_c = roi_bins;
                 cfg.decoder.vision_dim = embed_dim;
                 cfg.decoder.d_model = embed_dim;
                 cfg.validate();
                 return cfg;
             }),
             py::arg("patch_size") = 14, py::arg("embed_dim") = 64, py::arg("depth") = 2,
             py::arg("heads") = 4, py::arg("tile_side") = 336, py::arg("budget") = 16,
             py::arg("roi_bins") = 16);

    py::class_<RespondResult>(m, "RespondResult")
        // the decoder is byte-level, so the raw text may not be valid UTF-8
        .def_property_readonly("text",
                               [](const RespondResult& r) { return py::bytes(r.text); })
        .def_readonly("prefix_tokens", &RespondResult::prefix_tokens)
        .def_readonly("generated_tokens", &RespondResult::generated_tokens);

    struct PyModel {
        ModelConfig cfg;
        ModelWeights weights;
    };
    py::class_<PyModel>(m, "Model")
        .def(py::init([](const ModelConfig& cfg, uint64_t seed) {
                 return PyModel{cfg, init_model(cfg, seed)};
             }),
             py::arg("config"), py::arg("seed") = 42)
        .def("respond",
             [](const PyModel& self, const py::array_t<double>& image, const py::list& masks,
                const std::string& instruction, const std::string& mode, int64_t max_tokens) {
                 Request req;
                 req.image = tensor_from_array(image);
                 for (const auto& mask : masks) {
                     req.prompts.masks.push_back(
                         mask_from_array(mask.cast<py::array_t<uint8_t>>()));
                 }
                 req.instruction = instruction;
                 req.mode = encoder_mode_from_string(mode);
                 return respond(req, self.cfg, self.weights, max_tokens);
             },
             py::arg("image"), py::arg("masks"), py::arg("instruction"),
             py::arg("mode") = "roi_replay", py::arg("max_tokens") = 16)
        .def("sequence_length", [](const PyModel& self, const py::array_t<double>& image,
                                   const py::list& masks, const std::string& instruction,
                                   const std::string& mode) {
            Request req;
            req.image = tensor_from_array(image);
            for (const auto& mask : masks) {
                req.prompts.masks.push_back(mask_from_array(mask.cast<py::array_t<uint8_t>>()));
            }
            req.instruction = instruction;
            req.mode = encoder_mode_from_string(mode);
            return assemble(req, self.cfg, self.weights).length();
        });

    // ---- eval utilities ----
    m.def("score_mcq",
          [](const std::string& pred, const std::map<std::string, std::string>& choices,
             const std::string& gold) {
              BenchItem item;
              item.id = "py";
              item.kind = ItemKind::Mcq;
              item.choices = choices;
              item.gold = gold;
              item.subtask = "color";
              item.masks = {"1 1; 0:1"};
              item.validate();
              const McqScore s = score_mcq(pred, item);
              py::dict d;
              d["score"] = s.score;
              d["parse_failure"] = s.parse_failure;
              d["ambiguous"] = s.ambiguous;
              d["parsed"] = s.parsed;
              return d;
          },
          py::arg("pred"), py::arg("choices"), py::arg("gold"));
    m.def("difficulty_filter", [](const std::vector<std::string>& models,
                                  const std::map<std::string, std::vector<bool>>& rows) {
        PanelMatrix matrix;
        matrix.models = models;
        matrix.rows = rows;
        return difficulty_filter(matrix);
    });

    m.def("sample_frames", &sample_frames, py::arg("frame_count"), py::arg("target") = 16);
}
