// Python bindings: toy codec, VCPF containers, metrics, model construction,
// checkpoints, enhancement, training and the ablation variant list. Frames
// cross the boundary as (frames, height, width) numpy arrays.

#include "cpga/ablation.hpp"
#include "cpga/codec.hpp"
#include "cpga/data.hpp"
#include "cpga/error.hpp"
#include "cpga/metrics.hpp"
#include "cpga/train.hpp"
#include "cpga/vcpf.hpp"
#include "cpga/version.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <memory>

namespace py = pybind11;
using namespace cpga;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

codec::Plane8 plane_from(const U8Array& a) {
    if (a.ndim() != 2) throw InvalidArgument("expected a 2-D uint8 array");
    codec::Plane8 p(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(p.data.data(), a.data(), p.data.size());
    return p;
}

codec::LumaSequence sequence_from(const U8Array& a) {
    if (a.ndim() != 3) throw InvalidArgument("expected a (frames, height, width) uint8 array");
    codec::LumaSequence s;
    s.height = static_cast<int>(a.shape(1));
    s.width = static_cast<int>(a.shape(2));
    const std::size_t plane = static_cast<std::size_t>(s.width) * s.height;
    for (py::ssize_t f = 0; f < a.shape(0); ++f) {
        codec::Plane8 p(s.width, s.height);
        std::memcpy(p.data.data(), a.data() + f * plane, plane);
        s.frames.push_back(std::move(p));
    }
    s.validate();
    return s;
}

template <typename T, typename Get>
py::array_t<T> stack_planes(std::size_t count, int height, int width, Get get) {
    py::array_t<T> out({static_cast<py::ssize_t>(count), static_cast<py::ssize_t>(height),
                        static_cast<py::ssize_t>(width)});
    const std::size_t plane = static_cast<std::size_t>(width) * height;
    for (std::size_t f = 0; f < count; ++f) std::memcpy(out.mutable_data() + f * plane, get(f).data.data(), plane * sizeof(T));
    return out;
}

py::array_t<std::uint8_t> sequence_to(const codec::LumaSequence& s) {
    return stack_planes<std::uint8_t>(s.frames.size(), s.height, s.width,
                                      [&](std::size_t f) -> const codec::Plane8& { return s.frames[f]; });
}

py::array_t<std::int16_t> motion_to(const codec::CodingPriors& p) {
    const auto& first = p.frames.front().mv;
    py::array_t<std::int16_t> out({static_cast<py::ssize_t>(p.frames.size()), static_cast<py::ssize_t>(first.rows),
                                   static_cast<py::ssize_t>(first.cols), py::ssize_t{2}});
    auto* d = out.mutable_data();
    for (const auto& f : p.frames)
        for (const auto& v : f.mv.vectors) {
            *d++ = v.dx;
            *d++ = v.dy;
        }
    return out;
}

// Config dictionaries overlay the defaults; values may be numbers, bools or
// strings and unknown keys are rejected.
std::map<std::string, std::string> overlay(std::map<std::string, std::string> kv, const py::dict& d) {
    for (const auto& [k, v] : d) {
        const auto key = py::str(k).cast<std::string>();
        if (!kv.count(key)) throw InvalidArgument("unknown config field '" + key + "'");
        if (py::isinstance<py::bool_>(v)) kv[key] = v.cast<bool>() ? "1" : "0";
        else kv[key] = py::str(v).cast<std::string>();
    }
    return kv;
}

py::dict to_dict(const std::map<std::string, std::string>& kv) {
    py::dict d;
    for (const auto& [k, v] : kv) d[py::str(k)] = v;
    return d;
}

ModelConfig model_config_from(const py::dict& d) {
    auto c = ModelConfig::from_map(overlay(parse_key_values(ModelConfig{}.to_text()), d));
    c.validate();
    return c;
}

train::TrainConfig train_config_from(const py::dict& d, const std::string& profile) {
    return train::TrainConfig::from_map(
        overlay(parse_key_values(train::TrainConfig::for_profile(train::parse_profile(profile)).to_text()), d));
}

py::dict report_dict(const metrics::SequenceReport& r) {
    py::dict d;
    std::vector<double> lq, enh, slq, senh;
    for (const auto& f : r.frames) {
        lq.push_back(f.psnr_lq);
        enh.push_back(f.psnr_enh);
        slq.push_back(f.ssim_lq);
        senh.push_back(f.ssim_enh);
    }
    d["psnr_lq"] = lq;
    d["psnr_enh"] = enh;
    d["ssim_lq"] = slq;
    d["ssim_enh"] = senh;
    d["mean_psnr_lq"] = r.mean_psnr_lq;
    d["mean_psnr_enh"] = r.mean_psnr_enh;
    d["delta_psnr"] = r.delta_psnr;
    d["delta_ssim"] = r.delta_ssim;
    d["fps"] = r.fps;
    d["parameter_count"] = r.parameter_count;
    return d;
}

data::PairedSequence pair_from(const vcpf::Container& c, const py::object& raw) {
    const auto gt = raw.is_none() ? codec::crop_sequence(c.lq, c.orig_width, c.orig_height)
                                  : sequence_from(raw.cast<U8Array>());
    return data::make_pair(gt, c);
}

struct Model {
    std::unique_ptr<CpgaModel<float>> net;
    std::unique_ptr<train::Trainer> trainer;
    std::vector<data::PairedSequence> dataset;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Coding-prior guided compressed-video quality enhancement";
    m.attr("__version__") = kVersionString;
    m.attr("SUPPORTED_QPS") = std::vector<int>(std::begin(codec::kSupportedQps), std::end(codec::kSupportedQps));

    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_RuntimeError);

    m.def("quant_step", &codec::quant_step, py::arg("qp"));
    m.def(
        "block_motion_search",
        [](const U8Array& cur, const U8Array& ref, int x, int y, int block, int range) {
            const auto r = codec::block_motion_search(plane_from(cur), plane_from(ref), x, y, block, range);
            return py::make_tuple(r.dx, r.dy, r.sad);
        },
        py::arg("cur"), py::arg("ref"), py::arg("x"), py::arg("y"), py::arg("block") = 16, py::arg("range") = 8,
        "Full-search integer motion vector (dx, dy, sad) for one block.");

    py::class_<vcpf::Container>(m, "Container", "LQ frames plus coding priors, as stored in a VCPF file.")
        .def_property_readonly("lq", [](const vcpf::Container& c) { return sequence_to(c.lq); })
        .def_property_readonly("predictive",
                               [](const vcpf::Container& c) {
                                   return stack_planes<std::uint8_t>(
                                       c.priors.frames.size(), c.lq.height, c.lq.width,
                                       [&](std::size_t f) -> const codec::Plane8& { return c.priors.frames[f].predictive; });
                               })
        .def_property_readonly("residual",
                               [](const vcpf::Container& c) {
                                   return stack_planes<std::int16_t>(
                                       c.priors.frames.size(), c.lq.height, c.lq.width,
                                       [&](std::size_t f) -> const codec::Plane16& { return c.priors.frames[f].residual; });
                               })
        .def_property_readonly("motion", [](const vcpf::Container& c) { return motion_to(c.priors); },
                               "(frames, rows, cols, 2) int16, last axis (dx, dy)")
        .def_property_readonly("frame_types",
                               [](const vcpf::Container& c) {
                                   std::vector<std::string> t;
                                   for (const auto& f : c.priors.frames)
                                       t.push_back(f.type == codec::FrameType::Intra ? "I" : "P");
                                   return t;
                               })
        .def_property_readonly("qp", [](const vcpf::Container& c) { return c.config.qp; })
        .def_property_readonly("block_size", [](const vcpf::Container& c) { return c.config.block_size; })
        .def_property_readonly("search_range", [](const vcpf::Container& c) { return c.config.search_range; })
        .def_readonly("orig_width", &vcpf::Container::orig_width)
        .def_readonly("orig_height", &vcpf::Container::orig_height)
        .def("to_bytes",
             [](const vcpf::Container& c) {
                 const auto b = vcpf::serialize(c);
                 return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
             })
        .def_static("from_bytes",
                    [](const py::bytes& b) {
                        const std::string s = b;
                        return vcpf::parse({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
                    })
        .def("save", [](const vcpf::Container& c, const std::filesystem::path& p) { vcpf::write_file(c, p); })
        .def_static("load", &vcpf::read_file)
        .def("__eq__", [](const vcpf::Container& a, const vcpf::Container& b) { return a == b; });

    m.def(
        "encode",
        [](const U8Array& frames, int qp, int block, int range, int threads) {
            const codec::CodecConfig cfg{block, range, qp};
            cfg.validate();
            const auto padded = codec::pad_to_block_grid(sequence_from(frames), block);
            py::gil_scoped_release release;
            auto enc = codec::encode_sequence(padded.sequence, cfg, threads);
            return vcpf::Container{std::move(enc.lq), std::move(enc.priors), cfg, padded.orig_width,
                                   padded.orig_height};
        },
        py::arg("frames"), py::arg("qp") = 37, py::arg("block") = 16, py::arg("search_range") = 8,
        py::arg("threads") = 1, "Encodes (frames, H, W) uint8 luma with the toy codec.");

    m.def(
        "make_toy_sequence",
        [](int w, int h, int frames, std::uint64_t seed) { return sequence_to(data::make_toy_sequence(w, h, frames, seed)); },
        py::arg("width"), py::arg("height"), py::arg("frames"), py::arg("seed") = 1);
    m.def("read_raw", [](const std::filesystem::path& p) { return sequence_to(data::read_raw(p)); },
          "Reads planar luma using its .hdr sidecar.");
    m.def("write_raw", [](const U8Array& a, const std::filesystem::path& p) { data::write_raw(sequence_from(a), p); });

    m.def("psnr", [](const U8Array& a, const U8Array& b) { return metrics::psnr(plane_from(a), plane_from(b)); });
    m.def("ssim", [](const U8Array& a, const U8Array& b) { return metrics::ssim(plane_from(a), plane_from(b)); });

    m.def("default_model_config", [] { return to_dict(parse_key_values(ModelConfig{}.to_text())); });
    m.def(
        "default_train_config",
        [](const std::string& profile) {
            return to_dict(parse_key_values(train::TrainConfig::for_profile(train::parse_profile(profile)).to_text()));
        },
        py::arg("profile") = "desk");

    m.def(
        "ablation_variants",
        [](const std::string& flags) {
            std::vector<std::pair<int, std::string>> out;
            for (int v : ablation::variants_for(ablation::parse_flag_list(flags)))
                out.emplace_back(v, PriorFlags::ablation_variant(v).label());
            return out;
        },
        py::arg("flags") = "mv,pred,resid", "(index, priors) of the Model-1..7 variants the flags enumerate.");

    py::class_<Model>(m, "Model")
        .def(py::init([](const py::dict& config) {
                 auto md = std::make_unique<Model>();
                 md->net = std::make_unique<CpgaModel<float>>(model_config_from(config));
                 return md;
             }),
             py::arg("config") = py::dict())
        .def_static(
            "load",
            [](const std::filesystem::path& p) {
                const auto ckpt = train::load_checkpoint(p);
                auto md = std::make_unique<Model>();
                md->net = std::make_unique<CpgaModel<float>>(ckpt.model);
                train::restore_parameters(*md->net, ckpt);
                return md;
            },
            py::arg("path"))
        .def("save",
             [](const Model& md, const std::filesystem::path& p) {
                 train::save_checkpoint(train::capture(*md.net, md.trainer.get()), p);
             })
        .def_property_readonly("parameter_count", [](const Model& md) { return md.net->parameter_count(); })
        .def_property_readonly("config", [](const Model& md) { return to_dict(parse_key_values(md.net->config().to_text())); })
        .def(
            "evaluate",
            [](const Model& md, const vcpf::Container& c, const py::object& raw) {
                const auto seq = pair_from(c, raw);
                metrics::EvalResult r;
                {
                    py::gil_scoped_release release;
                    r = metrics::evaluate_sequence(*md.net, seq, {0, 0, true});
                }
                py::dict d;
                d["enhanced"] = sequence_to(r.enhanced);
                if (!raw.is_none()) d["report"] = report_dict(r.report);
                return d;
            },
            py::arg("container"), py::arg("raw") = py::none(),
            "Enhances every frame; with ground truth also returns the per-frame report.")
        .def(
            "fit",
            [](Model& md, const std::vector<std::pair<U8Array, vcpf::Container>>& clips, int iterations,
               const py::dict& train_config, const std::string& profile) {
                if (md.trainer && !clips.empty())
                    throw InvalidArgument("training data is fixed after the first fit() call");
                if (!md.trainer) {
                    for (const auto& [raw, c] : clips) md.dataset.push_back(data::make_pair(sequence_from(raw), c));
                    md.trainer = std::make_unique<train::Trainer>(*md.net, md.dataset,
                                                                  train_config_from(train_config, profile));
                }
                std::vector<double> losses;
                py::gil_scoped_release release;
                md.trainer->run(md.trainer->iteration() + iterations,
                                [&](const train::LossPoint& p) { losses.push_back(p.loss); });
                return losses;
            },
            py::arg("clips") = std::vector<std::pair<U8Array, vcpf::Container>>{}, py::arg("iterations") = 1,
            py::arg("train_config") = py::dict(), py::arg("profile") = "desk",
            "Trains on (raw, container) pairs; later calls continue the same run. Returns per-step losses.")
        .def(
            "bench",
            [](const Model& md, int w, int h, int frames) {
                const auto b = metrics::bench(*md.net, w, h, frames);
                py::dict d;
                d["fps_mean"] = b.fps_mean;
                d["fps_stdev"] = b.fps_stdev;
                d["seconds_per_frame"] = b.seconds_per_frame;
                d["parameter_count"] = b.parameter_count;
                return d;
            },
            py::arg("width") = 416, py::arg("height") = 240, py::arg("frames") = 10);
}
