// cpga: command-line entry point for prior generation, training, evaluation,
// enhancement, benchmarking and the coding-prior ablation grid.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include "cpga/ablation.hpp"
#include "cpga/codec.hpp"
#include "cpga/data.hpp"
#include "cpga/error.hpp"
#include "cpga/metrics.hpp"
#include "cpga/train.hpp"
#include "cpga/vcpf.hpp"
#include "cpga/version.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace cpga;

namespace {

using KeyValues = std::map<std::string, std::string>;

// Flags shared by several subcommands. Values are kept as text so that only
// the flags the user actually typed override the config file.
struct Common {
    std::string config_file;
    std::string qp, block, range, profile, gate_axis, seed, threads;
    CLI::Option* qp_opt = nullptr;
    CLI::Option* block_opt = nullptr;
    CLI::Option* range_opt = nullptr;
    CLI::Option* profile_opt = nullptr;
    CLI::Option* gate_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* threads_opt = nullptr;
};

// Model/training overrides available to train, ablate and bench.
struct Tuning {
    std::string iters, lr, batch, crop, channels, radius;
    CLI::Option* iters_opt = nullptr;
    CLI::Option* lr_opt = nullptr;
    CLI::Option* batch_opt = nullptr;
    CLI::Option* crop_opt = nullptr;
    CLI::Option* channels_opt = nullptr;
    CLI::Option* radius_opt = nullptr;
};

struct Resolved {
    codec::CodecConfig codec;
    ModelConfig model;
    train::TrainConfig train;
    std::string profile = "desk";
    int threads = 1;
};

const CLI::Validator kQpCheck(
    [](std::string& s) -> std::string {
        for (int q : codec::kSupportedQps)
            if (s == std::to_string(q)) return {};
        return "unsupported QP " + s + "; supported set is {22, 27, 32, 37}";
    },
    "{22,27,32,37}");

void add_codec_flags(CLI::App* app, Common& c) {
    c.qp_opt = app->add_option("--qp", c.qp, "Quantization parameter")->check(kQpCheck)->default_str("37");
    c.block_opt = app->add_option("--block", c.block, "Motion block size")
                      ->check(CLI::IsMember({"8", "16"}))
                      ->default_str("16");
    c.range_opt = app->add_option("--range", c.range, "Motion search range in pixels")
                      ->check(CLI::Range(0, 64))
                      ->default_str("8");
}

void add_run_flags(CLI::App* app, Common& c, bool with_profile = true) {
    app->add_option("--config", c.config_file, "JSON config file with optional codec/model/train sections")
        ->check(CLI::ExistingFile);
    if (with_profile)
        c.profile_opt = app->add_option("--profile", c.profile, "Training batch/crop profile")
                            ->check(CLI::IsMember({"paper", "desk"}))
                            ->default_str("desk");
    c.gate_opt = app->add_option("--gate-axis", c.gate_axis, "Softmax axis of the temporal gate")
                     ->check(CLI::IsMember({"channel", "temporal"}))
                     ->default_str("channel");
    c.seed_opt = app->add_option("--seed", c.seed, "Seed for initialisation and sampling")
                     ->check(CLI::NonNegativeNumber)
                     ->default_str("1");
}

void add_threads_flag(CLI::App* app, Common& c) {
    c.threads_opt = app->add_option("--threads", c.threads, "Worker threads")
                        ->check(CLI::Range(1, 256))
                        ->default_str("1");
}

void add_tuning_flags(CLI::App* app, Tuning& t) {
    t.iters_opt = app->add_option("--iters", t.iters, "Training iterations")
                      ->check(CLI::PositiveNumber)
                      ->default_str("1000");
    t.lr_opt = app->add_option("--lr", t.lr, "Adam learning rate")->check(CLI::PositiveNumber)->default_str("1e-4");
    t.batch_opt = app->add_option("--batch", t.batch, "Clips per batch")
                      ->check(CLI::PositiveNumber)
                      ->default_str("from profile");
    t.crop_opt = app->add_option("--crop", t.crop, "Square training crop, 0 = full frame")
                     ->check(CLI::NonNegativeNumber)
                     ->default_str("from profile");
    t.channels_opt = app->add_option("--channels", t.channels, "Feature channels C")
                         ->check(CLI::PositiveNumber)
                         ->default_str("32");
    t.radius_opt = app->add_option("--radius", t.radius, "Temporal radius T (clips hold 2T+1 frames)")
                       ->check(CLI::PositiveNumber)
                       ->default_str("3");
}

std::string json_scalar_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
    if (v.is_number()) return v.dump();
    throw InvalidArgument("config values must be scalars, got " + v.dump());
}

void overlay_section(KeyValues& kv, const json& cfg, const char* section) {
    if (!cfg.contains(section)) return;
    const auto& s = cfg.at(section);
    if (!s.is_object()) throw InvalidArgument(std::string("config section '") + section + "' must be an object");
    for (const auto& [k, v] : s.items()) {
        if (!kv.count(k)) throw InvalidArgument(std::string("unknown config field '") + section + "." + k + "'");
        kv[k] = json_scalar_text(v);
    }
}

void set_if(KeyValues& kv, const CLI::Option* opt, const char* key, const std::string& value) {
    if (opt && opt->count() > 0) kv[key] = value;
}

KeyValues codec_map(const codec::CodecConfig& c) {
    return {{"block_size", std::to_string(c.block_size)},
            {"qp", std::to_string(c.qp)},
            {"search_range", std::to_string(c.search_range)}};
}

json map_json(const KeyValues& kv) {
    json j = json::object();
    for (const auto& [k, v] : kv) j[k] = v;
    return j;
}

// Built-in defaults, then the config file, then explicitly given flags.
Resolved resolve(const Common& c, const Tuning* t) {
    json file = json::object();
    if (!c.config_file.empty()) {
        std::ifstream in(c.config_file);
        try {
            file = json::parse(in);
        } catch (const json::parse_error& e) {
            throw InvalidArgument("config file " + c.config_file + ": " + e.what());
        }
        if (!file.is_object()) throw InvalidArgument("config file must hold a JSON object");
        for (const auto& [k, v] : file.items())
            if (k != "codec" && k != "model" && k != "train" && k != "profile" && k != "threads")
                throw InvalidArgument("unknown config section '" + k + "'");
    }

    Resolved r;
    if (file.contains("profile")) r.profile = json_scalar_text(file["profile"]);
    if (c.profile_opt && c.profile_opt->count()) r.profile = c.profile;
    if (file.contains("threads")) r.threads = std::stoi(json_scalar_text(file["threads"]));
    if (c.threads_opt && c.threads_opt->count()) r.threads = std::stoi(c.threads);
    if (r.threads < 1) throw InvalidArgument("threads must be >= 1");

    KeyValues cm = codec_map(codec::CodecConfig{});
    KeyValues mm = parse_key_values(ModelConfig{}.to_text());
    KeyValues tm = parse_key_values(train::TrainConfig::for_profile(train::parse_profile(r.profile)).to_text());
    tm["workers"] = std::to_string(r.threads);
    overlay_section(cm, file, "codec");
    overlay_section(mm, file, "model");
    overlay_section(tm, file, "train");

    set_if(cm, c.qp_opt, "qp", c.qp);
    set_if(cm, c.block_opt, "block_size", c.block);
    set_if(cm, c.range_opt, "search_range", c.range);
    set_if(mm, c.range_opt, "search_range", c.range);
    set_if(mm, c.gate_opt, "gate_axis", c.gate_axis);
    set_if(mm, c.seed_opt, "seed", c.seed);
    set_if(tm, c.seed_opt, "seed", c.seed);
    set_if(tm, c.threads_opt, "workers", c.threads);
    if (t) {
        set_if(tm, t->iters_opt, "max_iters", t->iters);
        set_if(tm, t->lr_opt, "lr", t->lr);
        set_if(tm, t->batch_opt, "batch", t->batch);
        set_if(tm, t->crop_opt, "crop", t->crop);
        set_if(mm, t->channels_opt, "channels", t->channels);
        set_if(mm, t->radius_opt, "radius", t->radius);
    }

    auto as_int = [](const KeyValues& kv, const char* key) {
        try {
            return std::stoi(kv.at(key));
        } catch (const std::logic_error&) {
            throw InvalidArgument(std::string("config field '") + key + "' is not an integer");
        }
    };
    r.codec.block_size = as_int(cm, "block_size");
    r.codec.qp = as_int(cm, "qp");
    r.codec.search_range = as_int(cm, "search_range");
    r.codec.validate();
    r.model = ModelConfig::from_map(mm);
    r.model.validate();
    r.train = train::TrainConfig::from_map(tm);
    return r;
}

// Everything needed to describe, and later replay, one run.
struct RunManifest {
    std::string subcommand;
    std::vector<std::string> argv;
    json config = json::object();
    std::uint64_t seed = 0;
    std::vector<std::string> inputs, outputs;

    void write(const fs::path& dir) const {
        json j;
        j["subcommand"] = subcommand;
        j["argv"] = argv;
        j["cwd"] = fs::current_path().string();
        j["config"] = config;
        j["seed"] = seed;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["versions"] = {{"cpga", kVersionString},
                         {"vcpf", vcpf::kVersion},
                         {"checkpoint", train::kCheckpointVersion}};
        if (!dir.empty()) fs::create_directories(dir);
        const auto path = dir / (subcommand + ".run.json");
        std::ofstream out(path);
        out << j.dump(2) << '\n';
        if (!out) throw std::runtime_error("cannot write " + path.string());
    }
};

json resolved_json(const Resolved& r) {
    return {{"codec", map_json(codec_map(r.codec))},
            {"model", map_json(parse_key_values(r.model.to_text()))},
            {"train", map_json(parse_key_values(r.train.to_text()))},
            {"profile", r.profile},
            {"threads", r.threads}};
}

std::vector<data::PairedSequence> load_dataset(const fs::path& manifest, RunManifest& run) {
    std::vector<data::PairedSequence> out;
    run.inputs.push_back(manifest.string());
    for (const auto& e : data::read_manifest(manifest)) {
        out.push_back(data::load_pair(e.raw, e.vcpf));
        run.inputs.push_back(e.raw.string());
        run.inputs.push_back(e.vcpf.string());
    }
    if (out.empty()) throw InvalidArgument("manifest " + manifest.string() + " lists no sequences");
    return out;
}

int dataset_search_range(const std::vector<data::PairedSequence>& ds) {
    const int range = ds.front().config.search_range;
    for (const auto& s : ds)
        if (s.config.search_range != range)
            throw InvalidArgument("dataset mixes search ranges " + std::to_string(range) + " and " +
                                  std::to_string(s.config.search_range));
    return range;
}

struct LoadedModel {
    std::unique_ptr<CpgaModel<float>> model;
    train::Checkpoint ckpt;
};

LoadedModel load_model(const fs::path& path) {
    LoadedModel m;
    m.ckpt = train::load_checkpoint(path);
    m.model = std::make_unique<CpgaModel<float>>(m.ckpt.model);
    train::restore_parameters(*m.model, m.ckpt);
    return m;
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v;
    return s.str();
}

void print_report_line(const std::string& name, const metrics::SequenceReport& r) {
    std::cout << std::left << std::setw(28) << name << " frames " << std::setw(4) << r.frames.size() << " PSNR "
              << fmt(r.mean_psnr_lq) << " -> " << fmt(r.mean_psnr_enh) << " (" << (r.delta_psnr >= 0 ? "+" : "")
              << fmt(r.delta_psnr) << " dB)  SSIM " << fmt(r.mean_ssim_lq) << " -> " << fmt(r.mean_ssim_enh)
              << '\n';
}

json report_json(const metrics::SequenceReport& r) {
    return {{"frames", r.frames.size()},
            {"mean_psnr_lq", r.mean_psnr_lq},
            {"mean_psnr_enh", r.mean_psnr_enh},
            {"delta_psnr", r.delta_psnr},
            {"mean_ssim_lq", r.mean_ssim_lq},
            {"mean_ssim_enh", r.mean_ssim_enh},
            {"delta_ssim", r.delta_ssim},
            {"fps", r.fps},
            {"parameter_count", r.parameter_count}};
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::vector<std::uint64_t> parse_seed_list(const std::string& list) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stoull(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw InvalidArgument("seed list entry '" + item + "' is not a non-negative integer");
        }
    }
    if (out.empty()) throw InvalidArgument("seed list is empty");
    return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct MakeToyArgs {
    std::string out_dir;
    int clips = 2, width = 64, height = 64, frames = 7;
    std::uint64_t seed = 1;
};

int run_make_toy(const MakeToyArgs& a, RunManifest& run) {
    for (int i = 0; i < a.clips; ++i) {
        const auto seq = data::make_toy_sequence(a.width, a.height, a.frames, a.seed * 1000 + i);
        std::ostringstream name;
        name << "toy_" << std::setw(3) << std::setfill('0') << i << ".y";
        const auto path = fs::path(a.out_dir) / name.str();
        fs::create_directories(a.out_dir);
        data::write_raw(seq, path);
        run.outputs.push_back(path.string());
        std::cout << path.string() << '\n';
    }
    run.config = {{"clips", a.clips}, {"width", a.width}, {"height", a.height}, {"frames", a.frames}};
    run.seed = a.seed;
    run.write(a.out_dir);
    return 0;
}

struct EncodeArgs {
    std::vector<std::string> inputs;
    std::string out, out_dir, manifest;
    int width = 0, height = 0, frames = 0;
};

int run_encode(const EncodeArgs& a, const Common& c, RunManifest& run) {
    const Resolved r = resolve(c, nullptr);
    if (a.inputs.size() > 1 && a.out_dir.empty())
        throw InvalidArgument("several inputs need --out-dir");
    if (a.out.empty() == a.out_dir.empty()) throw InvalidArgument("give exactly one of --out and --out-dir");

    std::vector<data::ManifestEntry> entries;
    for (const auto& in : a.inputs) {
        const auto seq = (a.width > 0 || a.height > 0) ? data::read_raw(in, a.width, a.height, a.frames)
                                                         : data::read_raw(in);
        const auto padded = codec::pad_to_block_grid(seq, r.codec.block_size);
        auto enc = codec::encode_sequence(padded.sequence, r.codec, r.threads);
        const vcpf::Container container{std::move(enc.lq), std::move(enc.priors), r.codec, padded.orig_width,
                                        padded.orig_height};
        const fs::path out =
            a.out.empty() ? fs::path(a.out_dir) / fs::path(in).filename().replace_extension(".vcpf") : fs::path(a.out);
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        vcpf::write_file(container, out);
        entries.push_back({fs::absolute(in), fs::absolute(out)});
        run.inputs.push_back(in);
        run.outputs.push_back(out.string());
        std::cout << in << " -> " << out.string() << " (" << seq.width << "x" << seq.height << ", "
                  << seq.frames.size() << " frames, qp " << r.codec.qp << ")\n";
    }
    if (!a.manifest.empty()) {
        std::vector<data::ManifestEntry> all;
        if (fs::exists(a.manifest)) all = data::read_manifest(a.manifest);
        for (const auto& e : entries) {
            bool dup = false;
            for (const auto& o : all) dup = dup || (fs::absolute(o.raw) == e.raw && fs::absolute(o.vcpf) == e.vcpf);
            if (!dup) all.push_back(e);
        }
        data::write_manifest(all, a.manifest);
        run.outputs.push_back(a.manifest);
    }
    run.config = {{"codec", map_json(codec_map(r.codec))}, {"threads", r.threads}};
    run.write(a.out_dir.empty() ? fs::path(a.out).parent_path() : fs::path(a.out_dir));
    return 0;
}

struct TrainArgs {
    std::string manifest, out_dir, resume;
    int log_every = 50, save_every = 0;
};

int run_train(const TrainArgs& a, const Common& c, const Tuning& t, RunManifest& run) {
    Resolved r = resolve(c, &t);
    const auto dataset = load_dataset(a.manifest, run);
    if (!c.range_opt->count()) r.model.search_range = dataset_search_range(dataset);

    CpgaModel<float> model(r.model);
    train::Trainer trainer(model, dataset, r.train);
    if (!a.resume.empty()) {
        const auto ckpt = train::load_checkpoint(a.resume);
        if (!(ckpt.model == r.model))
            throw InvalidArgument("checkpoint " + a.resume + " was trained with a different model config");
        train::restore_parameters(model, ckpt);
        train::restore_trainer(trainer, ckpt);
        run.inputs.push_back(a.resume);
        std::cerr << "resumed at iteration " << trainer.iteration() << '\n';
    }

    fs::create_directories(a.out_dir);
    const auto ckpt_path = fs::path(a.out_dir) / "checkpoint.ckpt";
    const auto loss_path = fs::path(a.out_dir) / "loss.csv";
    if (a.resume.empty() && fs::exists(loss_path)) fs::remove(loss_path);

    std::vector<train::LossPoint> pending;
    double window = 0.0;
    int window_n = 0;
    const auto t0 = std::chrono::steady_clock::now();
    trainer.run(r.train.max_iters, [&](const train::LossPoint& p) {
        pending.push_back(p);
        window += p.loss;
        ++window_n;
        const bool log = a.log_every > 0 && (p.iter + 1) % a.log_every == 0;
        const bool save = a.save_every > 0 && (p.iter + 1) % a.save_every == 0;
        if (log) {
            const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::cerr << "iter " << p.iter + 1 << "/" << r.train.max_iters << " loss " << fmt(window / window_n, 6)
                      << " lr " << trainer.learning_rate(p.iter) << " elapsed " << fmt(el, 1) << "s\n";
            window = 0.0;
            window_n = 0;
        }
        if (log || save) {
            train::append_loss_csv(loss_path, pending);
            pending.clear();
        }
        if (save) train::save_checkpoint(train::capture(model, &trainer), ckpt_path);
    });
    train::append_loss_csv(loss_path, pending);
    train::save_checkpoint(train::capture(model, &trainer), ckpt_path);
    std::cout << "trained " << trainer.iteration() << " iterations; checkpoint " << ckpt_path.string() << '\n';

    run.config = resolved_json(r);
    run.seed = r.train.seed;
    run.outputs = {ckpt_path.string(), loss_path.string()};
    run.write(a.out_dir);
    return 0;
}

struct EvalArgs {
    std::string manifest, checkpoint, out_dir;
    int first = 0, count = 0;
    bool plot = true;
};

int run_eval(const EvalArgs& a, RunManifest& run) {
    const auto dataset = load_dataset(a.manifest, run);
    const auto m = load_model(a.checkpoint);
    run.inputs.push_back(a.checkpoint);
    fs::create_directories(a.out_dir);

    std::vector<metrics::SequenceReport> reports;
    json per_seq = json::array();
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& seq = dataset[i];
        const auto r = metrics::evaluate_sequence(*m.model, seq, {a.first, a.count, false});
        const auto stem = fs::path(seq.raw_path).stem().string() + "_" + std::to_string(i);
        const auto csv = fs::path(a.out_dir) / (stem + ".fluct.csv");
        metrics::write_fluctuation_csv(r.report, csv);
        run.outputs.push_back(csv.string());
        if (a.plot) {
            const auto ppm = fs::path(a.out_dir) / (stem + ".fluct.ppm");
            metrics::write_fluctuation_plot(r.report, ppm);
            run.outputs.push_back(ppm.string());
        }
        print_report_line(stem, r.report);
        auto j = report_json(r.report);
        j["raw"] = seq.raw_path;
        j["vcpf"] = seq.vcpf_path;
        per_seq.push_back(j);
        reports.push_back(r.report);
    }
    const auto all = metrics::combine(reports);
    print_report_line("overall", all);
    const auto summary = fs::path(a.out_dir) / "summary.json";
    write_json({{"overall", report_json(all)}, {"sequences", per_seq}}, summary);
    run.outputs.push_back(summary.string());

    run.config = {{"model", map_json(parse_key_values(m.ckpt.model.to_text()))},
                  {"first_frame", a.first},
                  {"frame_count", a.count}};
    run.seed = m.ckpt.seed;
    run.write(a.out_dir);
    return 0;
}

struct EnhanceArgs {
    std::string vcpf_path, raw_path, checkpoint, out_dir;
};

int run_enhance(const EnhanceArgs& a, RunManifest& run) {
    const auto m = load_model(a.checkpoint);
    const auto container = vcpf::read_file(a.vcpf_path);
    run.inputs = {a.vcpf_path, a.checkpoint};
    // Without ground truth the LQ frames stand in for it; the report is then
    // not written.
    const auto gt = a.raw_path.empty()
                        ? codec::crop_sequence(container.lq, container.orig_width, container.orig_height)
                        : data::read_raw(a.raw_path);
    if (!a.raw_path.empty()) run.inputs.push_back(a.raw_path);
    auto seq = data::make_pair(gt, container);
    seq.vcpf_path = a.vcpf_path;
    const auto r = metrics::evaluate_sequence(*m.model, seq, {0, 0, true});

    fs::create_directories(a.out_dir);
    const auto out = fs::path(a.out_dir) / (fs::path(a.vcpf_path).stem().string() + ".enhanced.y");
    data::write_raw(r.enhanced, out);
    run.outputs = {out.string(), data::sidecar_path(out).string()};
    std::cout << "enhanced " << r.enhanced.frames.size() << " frames -> " << out.string() << " ("
              << fmt(r.report.fps, 2) << " fps)\n";
    if (!a.raw_path.empty()) {
        const auto csv = fs::path(a.out_dir) / "fluct.csv";
        const auto ppm = fs::path(a.out_dir) / "fluct.ppm";
        const auto summary = fs::path(a.out_dir) / "report.json";
        metrics::write_fluctuation_csv(r.report, csv);
        metrics::write_fluctuation_plot(r.report, ppm);
        write_json(report_json(r.report), summary);
        print_report_line(fs::path(a.vcpf_path).stem().string(), r.report);
        run.outputs.insert(run.outputs.end(), {csv.string(), ppm.string(), summary.string()});
    }
    run.config = {{"model", map_json(parse_key_values(m.ckpt.model.to_text()))}};
    run.seed = m.ckpt.seed;
    run.write(a.out_dir);
    return 0;
}

struct BenchArgs {
    std::string checkpoint, resolution = "416x240", out_dir;
    int frames = 10;
};

int run_bench(const BenchArgs& a, const Common& c, RunManifest& run) {
    int w = 0, h = 0;
    char x = 0;
    std::istringstream rs(a.resolution);
    if (!(rs >> w >> x >> h) || x != 'x' || w <= 0 || h <= 0)
        throw InvalidArgument("resolution must look like 416x240, got '" + a.resolution + "'");

    std::unique_ptr<CpgaModel<float>> fresh;
    LoadedModel loaded;
    const CpgaModel<float>* model = nullptr;
    if (!a.checkpoint.empty()) {
        loaded = load_model(a.checkpoint);
        model = loaded.model.get();
        run.inputs.push_back(a.checkpoint);
    } else {
        fresh = std::make_unique<CpgaModel<float>>(resolve(c, nullptr).model);
        model = fresh.get();
    }
    const auto b = metrics::bench(*model, w, h, a.frames);
    std::cout << w << "x" << h << "  " << fmt(b.fps_mean, 3) << " fps (stdev " << fmt(b.fps_stdev, 3) << ", "
              << fmt(b.seconds_per_frame, 3) << " s/frame over " << b.frames << " frames)  params "
              << b.parameter_count << '\n';
    const json result = {{"width", w},
                         {"height", h},
                         {"frames", b.frames},
                         {"warmup_frames", metrics::kBenchWarmup},
                         {"fps_mean", b.fps_mean},
                         {"fps_stdev", b.fps_stdev},
                         {"seconds_per_frame", b.seconds_per_frame},
                         {"parameter_count", b.parameter_count}};
    run.config = {{"model", map_json(parse_key_values(model->config().to_text()))}, {"result", result}};
    run.seed = model->config().seed;
    if (!a.out_dir.empty()) {
        fs::create_directories(a.out_dir);
        write_json(result, fs::path(a.out_dir) / "bench.json");
        run.outputs.push_back((fs::path(a.out_dir) / "bench.json").string());
        run.write(a.out_dir);
    }
    return 0;
}

struct AblateArgs {
    std::string manifest, eval_manifest, out_dir, flags = "mv,pred,resid", seeds = "1,2,3";
    bool list_only = false;
};

int run_ablate(const AblateArgs& a, const Common& c, const Tuning& t, RunManifest& run) {
    const auto variants = ablation::variants_for(ablation::parse_flag_list(a.flags));
    if (a.list_only) {
        for (int v : variants)
            std::cout << "Model-" << v << "  " << PriorFlags::ablation_variant(v).label() << '\n';
        return 0;
    }
    if (a.manifest.empty() || a.out_dir.empty()) throw InvalidArgument("ablate needs --manifest and --out");
    Resolved r = resolve(c, &t);
    const auto train_set = load_dataset(a.manifest, run);
    const auto eval_set = a.eval_manifest.empty() ? train_set : load_dataset(a.eval_manifest, run);
    if (!c.range_opt->count()) r.model.search_range = dataset_search_range(train_set);

    ablation::GridConfig g;
    g.model = r.model;
    g.train = r.train;
    g.variants = variants;
    g.seeds = c.seed_opt->count() ? std::vector<std::uint64_t>{r.train.seed} : parse_seed_list(a.seeds);
    const auto result = ablation::run_grid(train_set, eval_set, g, [](const ablation::Cell& cell) {
        std::cout << "Model-" << cell.variant << " " << std::left << std::setw(16) << cell.flags.label() << " seed "
                  << cell.seed << "  dPSNR " << fmt(cell.delta_psnr) << " dB  dSSIM " << fmt(cell.delta_ssim, 5)
                  << "  loss " << fmt(cell.final_loss, 5) << "  " << fmt(cell.seconds, 1) << "s" << std::endl;
    });
    std::cout << "mean over " << g.seeds.size() << " seed(s):\n";
    for (int v : variants)
        std::cout << "  Model-" << v << " " << std::left << std::setw(16) << PriorFlags::ablation_variant(v).label()
                  << " dPSNR " << fmt(result.mean_delta_psnr(v)) << " dB\n";

    fs::create_directories(a.out_dir);
    const auto csv = fs::path(a.out_dir) / "grid.csv";
    ablation::write_grid_csv(result, csv);
    run.outputs.push_back(csv.string());
    run.config = resolved_json(r);
    run.config["variants"] = variants;
    run.config["seeds"] = g.seeds;
    run.seed = g.seeds.front();
    run.write(a.out_dir);
    return 0;
}

int dispatch(std::vector<std::string> args);

int run_rerun(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot read " + manifest_path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("manifest " + manifest_path + ": " + e.what());
    }
    if (!j.contains("argv") || !j.contains("cwd")) throw std::runtime_error("manifest lacks 'argv' or 'cwd'");
    auto argv = j["argv"].get<std::vector<std::string>>();
    if (!argv.empty() && argv.front() == "rerun") throw InvalidArgument("manifest records a rerun");
    const auto here = fs::current_path();
    fs::current_path(j["cwd"].get<std::string>());
    const int code = dispatch(argv);
    fs::current_path(here);
    return code;
}

int dispatch(std::vector<std::string> args) {
    CLI::App app{"Coding-prior guided video quality enhancement", "cpga"};
    app.set_version_flag("--version", std::string(kVersionString));
    app.set_help_all_flag("--help-all", "Print help for every subcommand, with defaults, and exit");
    app.require_subcommand(1);
    app.allow_extras(false);
    app.get_formatter()->column_width(36);

    // Each subcommand owns its flag storage so option handles never alias.
    Common enc_c, train_c, bench_c, ablate_c;
    Tuning train_t, ablate_t;
    RunManifest run;

    MakeToyArgs toy;
    auto* make_toy = app.add_subcommand("make-toy", "Write synthetic raw luma clips (with .hdr sidecars)");
    make_toy->add_option("--out", toy.out_dir, "Output directory")->required();
    make_toy->add_option("--clips", toy.clips, "Number of clips")->check(CLI::PositiveNumber)->capture_default_str();
    make_toy->add_option("--width", toy.width, "Frame width")->check(CLI::PositiveNumber)->capture_default_str();
    make_toy->add_option("--height", toy.height, "Frame height")->check(CLI::PositiveNumber)->capture_default_str();
    make_toy->add_option("--frames", toy.frames, "Frames per clip")->check(CLI::PositiveNumber)->capture_default_str();
    make_toy->add_option("--seed", toy.seed, "Content seed")->capture_default_str();

    EncodeArgs enc;
    auto* encode = app.add_subcommand("encode-priors", "Encode raw luma with the toy codec and write VCPF files");
    encode->add_option("--input", enc.inputs, "Raw 8-bit planar luma file(s)")->required()->check(CLI::ExistingFile);
    encode->add_option("--width", enc.width, "Frame width (default: from the .hdr sidecar)");
    encode->add_option("--height", enc.height, "Frame height (default: from the .hdr sidecar)");
    encode->add_option("--frames", enc.frames, "Frame count, 0 = infer from file size")->capture_default_str();
    encode->add_option("--out", enc.out, "Output VCPF file (single input)");
    encode->add_option("--out-dir", enc.out_dir, "Output directory, one <stem>.vcpf per input");
    encode->add_option("--manifest", enc.manifest, "Dataset manifest to append raw/VCPF pairs to");
    add_codec_flags(encode, enc_c);
    add_threads_flag(encode, enc_c);
    encode->add_option("--config", enc_c.config_file, "JSON config file")->check(CLI::ExistingFile);

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset manifest");
    train_cmd->add_option("--manifest", tr.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--out", tr.out_dir, "Run directory")->required();
    train_cmd->add_option("--resume", tr.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
    train_cmd->add_option("--log-every", tr.log_every, "Progress interval in iterations, 0 = quiet")
        ->capture_default_str();
    train_cmd->add_option("--save-every", tr.save_every, "Checkpoint interval in iterations, 0 = end only")
        ->capture_default_str();
    add_run_flags(train_cmd, train_c);
    add_tuning_flags(train_cmd, train_t);
    add_threads_flag(train_cmd, train_c);
    train_c.range_opt = train_cmd->add_option("--range", train_c.range, "Motion search range (default: from data)")
                           ->check(CLI::Range(0, 64));

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset manifest");
    eval_cmd->add_option("--manifest", ev.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", ev.out_dir, "Report directory")->required();
    eval_cmd->add_option("--first-frame", ev.first, "First frame to score")->capture_default_str();
    eval_cmd->add_option("--frame-count", ev.count, "Frames to score, 0 = to the end")->capture_default_str();
    eval_cmd->add_flag("!--no-plot", ev.plot, "Skip the PPM fluctuation plots");

    EnhanceArgs en;
    auto* enhance = app.add_subcommand("enhance", "Enhance one VCPF sequence into raw luma frames");
    enhance->add_option("--vcpf", en.vcpf_path, "Compressed sequence with priors")->required()->check(CLI::ExistingFile);
    enhance->add_option("--checkpoint", en.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    enhance->add_option("--raw", en.raw_path, "Ground truth (with .hdr sidecar) for a quality report")
        ->check(CLI::ExistingFile);
    enhance->add_option("--out", en.out_dir, "Output directory")->required();

    BenchArgs be;
    auto* bench = app.add_subcommand("bench", "Measure single-frame enhancement throughput");
    bench->add_option("--checkpoint", be.checkpoint, "Model checkpoint (default: a freshly initialised model)")
        ->check(CLI::ExistingFile);
    bench->add_option("--resolution", be.resolution, "WxH, e.g. 416x240, 832x480, 1280x720")->capture_default_str();
    bench->add_option("--frames", be.frames, "Timed frames after the warm-up")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    bench->add_option("--out", be.out_dir, "Directory for bench.json and the run manifest");
    add_run_flags(bench, bench_c, false);

    AblateArgs ab;
    auto* ablate = app.add_subcommand("ablate", "Train and score the coding-prior variant grid");
    ablate->add_option("--flags", ab.flags, "Priors to ablate, subset of mv,pred,resid")->capture_default_str();
    ablate->add_flag("--list", ab.list_only, "Only print the variants the flags enumerate");
    ablate->add_option("--manifest", ab.manifest, "Training manifest")->check(CLI::ExistingFile);
    ablate->add_option("--eval-manifest", ab.eval_manifest, "Evaluation manifest (default: the training one)")
        ->check(CLI::ExistingFile);
    ablate->add_option("--seeds", ab.seeds, "Comma-separated seeds (overridden by --seed)")->capture_default_str();
    ablate->add_option("--out", ab.out_dir, "Output directory");
    add_run_flags(ablate, ablate_c);
    add_tuning_flags(ablate, ablate_t);
    add_threads_flag(ablate, ablate_c);
    ablate_c.range_opt = ablate->add_option("--range", ablate_c.range, "Motion search range (default: from data)")
                           ->check(CLI::Range(0, 64));

    std::string rerun_manifest;
    auto* rerun = app.add_subcommand("rerun", "Repeat a run from its <subcommand>.run.json manifest");
    rerun->add_option("manifest", rerun_manifest, "Run manifest")->required()->check(CLI::ExistingFile);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "cpga: " << e.what() << '\n';
        return 2;
    }

    run.argv = args;
    auto* sub = app.get_subcommands().front();
    run.subcommand = sub->get_name();
    if (sub == make_toy) return run_make_toy(toy, run);
    if (sub == encode) return run_encode(enc, enc_c, run);
    if (sub == train_cmd) return run_train(tr, train_c, train_t, run);
    if (sub == eval_cmd) return run_eval(ev, run);
    if (sub == enhance) return run_enhance(en, run);
    if (sub == bench) return run_bench(be, bench_c, run);
    if (sub == ablate) return run_ablate(ab, ablate_c, ablate_t, run);
    if (sub == rerun) return run_rerun(rerun_manifest);
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(std::vector<std::string>(argv + 1, argv + argc));
    } catch (const InvalidArgument& e) {
        std::cerr << "cpga: error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "cpga: error: " << e.what() << '\n';
        return 1;
    }
}
