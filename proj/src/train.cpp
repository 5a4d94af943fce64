#include "cpga/train.hpp"

#include "cpga/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <future>
#include <numbers>
#include <sstream>

namespace cpga::train {

namespace fs = std::filesystem;
using nn::Tensor;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

// ---------------------------------------------------------------- config

TrainConfig TrainConfig::for_profile(Profile p) {
    TrainConfig c;
    if (p == Profile::Desk) {
        c.batch = 8;
        c.crop = 64;
    }
    return c;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw InvalidArgument("train config: " + m); };
    if (!(lr > 0)) fail("lr must be positive");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0, 1)");
    if (!(eps > 0)) fail("eps must be positive");
    if (batch < 1) fail("batch must be >= 1");
    if (crop < 4 || crop % 4 != 0) fail("crop must be a positive multiple of 4");
    if (!(charbonnier_eps > 0)) fail("charbonnier_eps must be positive");
    if (max_iters < 0) fail("max_iters must be >= 0");
    if (workers < 1) fail("workers must be >= 1");
}

namespace {

std::string real_text(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string TrainConfig::to_text() const {
    std::map<std::string, std::string> kv{
        {"batch", std::to_string(batch)},
        {"beta1", real_text(beta1)},
        {"beta2", real_text(beta2)},
        {"charbonnier_eps", real_text(charbonnier_eps)},
        {"cosine", cosine ? "1" : "0"},
        {"crop", std::to_string(crop)},
        {"eps", real_text(eps)},
        {"flips", flips ? "1" : "0"},
        {"lr", real_text(lr)},
        {"max_iters", std::to_string(max_iters)},
        {"seed", std::to_string(seed)},
        {"workers", std::to_string(workers)},
    };
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw InvalidArgument(std::string("missing config field '") + key + "'");
        return it->second;
    };
    auto num = [&](const char* key) {
        try {
            return std::stoll(get(key));
        } catch (const std::logic_error&) {
            throw InvalidArgument(std::string("config field '") + key + "' is not an integer");
        }
    };
    auto real = [&](const char* key) {
        try {
            return std::stod(get(key));
        } catch (const std::logic_error&) {
            throw InvalidArgument(std::string("config field '") + key + "' is not a number");
        }
    };
    TrainConfig c;
    c.batch = static_cast<int>(num("batch"));
    c.beta1 = real("beta1");
    c.beta2 = real("beta2");
    c.charbonnier_eps = real("charbonnier_eps");
    c.cosine = num("cosine") != 0;
    c.crop = static_cast<int>(num("crop"));
    c.eps = real("eps");
    c.flips = num("flips") != 0;
    c.lr = real("lr");
    c.max_iters = static_cast<int>(num("max_iters"));
    c.seed = static_cast<std::uint64_t>(num("seed"));
    c.workers = static_cast<int>(num("workers"));
    c.validate();
    return c;
}

Profile parse_profile(const std::string& s) {
    if (s == "paper") return Profile::Paper;
    if (s == "desk") return Profile::Desk;
    throw InvalidArgument("profile must be 'paper' or 'desk', got '" + s + "'");
}

std::string profile_name(Profile p) { return p == Profile::Paper ? "paper" : "desk"; }

// ---------------------------------------------------------------- Adam

Adam::Adam(const nn::ParameterStore<float>& store) {
    for (const auto& p : store.parameters()) {
        m_.emplace_back(p.var.shape());
        v_.emplace_back(p.var.shape());
    }
}

void Adam::step(nn::ParameterStore<float>& store, double lr, double beta1, double beta2, double eps) {
    const auto& params = store.parameters();
    if (params.size() != m_.size()) throw InvalidArgument("optimizer state does not match the parameter list");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    const float b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
    const float step = static_cast<float>(lr / c1);
    const float inv_c2 = static_cast<float>(1.0 / c2);
    const float e = static_cast<float>(eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        nn::Var<float> var = params[i].var;
        const auto& g = var.grad();
        if (g.empty()) continue;  // parameter not reached this step
        auto& w = var.mutable_value().data;
        auto& m = m_[i].data;
        auto& v = v_[i].data;
        for (std::size_t k = 0; k < w.size(); ++k) {
            const float gk = g.data[k];
            m[k] = b1 * m[k] + (1.0f - b1) * gk;
            v[k] = b2 * v[k] + (1.0f - b2) * gk * gk;
            w[k] -= step * m[k] / (std::sqrt(v[k] * inv_c2) + e);
        }
    }
}

// ---------------------------------------------------------------- sampling

std::vector<Draw> draw_batch(const std::vector<data::PairedSequence>& dataset, const TrainConfig& cfg,
                             std::int64_t iter) {
    if (dataset.empty()) throw InvalidArgument("training set is empty");
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(iter), static_cast<std::uint32_t>(iter >> 32)};
    std::mt19937_64 rng(seq);
    std::vector<Draw> out;
    out.reserve(cfg.batch);
    for (int b = 0; b < cfg.batch; ++b) {
        Draw d;
        d.sequence = std::uniform_int_distribution<int>(0, static_cast<int>(dataset.size()) - 1)(rng);
        const auto& s = dataset[d.sequence];
        d.center = std::uniform_int_distribution<int>(0, s.frames() - 1)(rng);
        d.augment = data::draw_augment(s.height(), s.width(), cfg.crop, cfg.flips, rng);
        out.push_back(d);
    }
    return out;
}

namespace {

std::string describe(const std::vector<Draw>& batch) {
    std::ostringstream os;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& d = batch[i];
        os << (i ? "; " : "") << "[" << i << "] sequence " << d.sequence << " frame " << d.center << " crop ("
           << d.augment.crop_x << "," << d.augment.crop_y << ")" << (d.augment.flip_h ? " flip-h" : "")
           << (d.augment.flip_v ? " flip-v" : "");
    }
    return os.str();
}

}  // namespace

NonFiniteLoss::NonFiniteLoss(std::int64_t iter, const std::vector<Draw>& batch)
    : std::runtime_error("non-finite loss at iteration " + std::to_string(iter) + "; batch: " + describe(batch)),
      iter_(iter),
      batch_(batch) {}

// ---------------------------------------------------------------- trainer

Trainer::Trainer(CpgaModel<float>& model, const std::vector<data::PairedSequence>& dataset, TrainConfig cfg)
    : model_(model), dataset_(dataset), cfg_(std::move(cfg)), adam_(model.parameters()) {
    cfg_.validate();
    if (dataset_.empty()) throw InvalidArgument("training set is empty");
    for (const auto& s : dataset_) {
        if (s.config.search_range != model_.config().search_range)
            throw InvalidArgument(s.vcpf_path + ": coded with search range " + std::to_string(s.config.search_range) +
                                  ", model expects " + std::to_string(model_.config().search_range));
        if (s.width() < cfg_.crop || s.height() < cfg_.crop)
            throw InvalidArgument("crop " + std::to_string(cfg_.crop) + " is larger than a " +
                                  std::to_string(s.width()) + "x" + std::to_string(s.height()) + " training sequence");
    }
}

data::ClipSample Trainer::sample(const Draw& d) const {
    return data::apply(data::window(dataset_[d.sequence], d.center, model_.config().radius), d.augment);
}

double Trainer::learning_rate(std::int64_t iter) const {
    if (!cfg_.cosine || cfg_.max_iters <= 0) return cfg_.lr;
    const double p = std::min(1.0, static_cast<double>(iter) / cfg_.max_iters);
    return 0.5 * cfg_.lr * (1.0 + std::cos(std::numbers::pi * p));
}

double Trainer::step() {
    const auto draws = draw_batch(dataset_, cfg_, iter_);
    std::vector<data::ClipSample> samples(draws.size());
    if (cfg_.workers > 1) {
        std::vector<std::future<void>> jobs;
        const int w = cfg_.workers;
        for (int k = 0; k < w; ++k)
            jobs.push_back(std::async(std::launch::async, [&, k] {
                for (std::size_t i = k; i < draws.size(); i += w) samples[i] = sample(draws[i]);
            }));
        for (auto& j : jobs) j.get();
    } else {
        for (std::size_t i = 0; i < draws.size(); ++i) samples[i] = sample(draws[i]);
    }
    const auto batch = data::collate(samples);

    auto& store = model_.parameters();
    store.zero_grad();
    const auto pred = model_.forward(batch);
    const auto loss = nn::ops::charbonnier(pred, batch.gt, static_cast<float>(cfg_.charbonnier_eps));
    const double value = loss.value().data[0];
    if (!std::isfinite(value)) throw NonFiniteLoss(iter_, draws);
    nn::backward(loss);
    adam_.step(store, learning_rate(iter_), cfg_.beta1, cfg_.beta2, cfg_.eps);
    history_.push_back({iter_, value});
    ++iter_;
    return value;
}

void Trainer::run(std::int64_t iterations, const std::function<void(const LossPoint&)>& on_step) {
    const std::int64_t target = std::min<std::int64_t>(iterations, cfg_.max_iters);
    while (iter_ < target) {
        step();
        if (on_step) on_step(history_.back());
    }
}

void append_loss_csv(const fs::path& path, const std::vector<LossPoint>& points) {
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    if (fresh) out << "iter,loss\n";
    char buf[64];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, "%.9g", p.loss);
        out << p.iter << ',' << buf << '\n';
    }
}

std::vector<LossPoint> read_loss_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<LossPoint> out;
    std::string line;
    std::getline(in, line);
    if (line != "iter,loss") throw InvalidArgument(path.string() + ": missing 'iter,loss' header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw InvalidArgument(path.string() + ": malformed row '" + line + "'");
        out.push_back({std::stoll(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
    }
    return out;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'C', 'P', 'G', 'A', 'C', 'K', 'P', 'T'};
enum Kind : std::uint8_t { kText = 0, kInt = 1, kTensor = 2 };

class ArchiveWriter {
public:
    void text(const std::string& name, const std::string& v) {
        header(name, kText, v.size());
        raw(v.data(), v.size());
        ++count_;
    }
    void integer(const std::string& name, std::int64_t v) {
        header(name, kInt, 8);
        raw(&v, 8);
        ++count_;
    }
    void tensor(const std::string& name, const Tensor<float>& t) {
        header(name, kTensor, 16 + t.data.size() * 4);
        const std::int32_t dims[4] = {t.shape.n, t.shape.c, t.shape.h, t.shape.w};
        raw(dims, 16);
        raw(t.data.data(), t.data.size() * 4);
        ++count_;
    }
    std::vector<std::uint8_t> finish() const {
        std::vector<std::uint8_t> out(kMagic, kMagic + 8);
        const std::uint32_t version = kCheckpointVersion;
        append(out, &version, 4);
        append(out, &count_, 4);
        out.insert(out.end(), body_.begin(), body_.end());
        return out;
    }

private:
    static void append(std::vector<std::uint8_t>& v, const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        v.insert(v.end(), b, b + n);
    }
    void raw(const void* p, std::size_t n) { append(body_, p, n); }
    void header(const std::string& name, Kind kind, std::uint64_t len) {
        const auto n = static_cast<std::uint32_t>(name.size());
        raw(&n, 4);
        raw(name.data(), name.size());
        body_.push_back(kind);
        raw(&len, 8);
    }
    std::vector<std::uint8_t> body_;
    std::uint32_t count_ = 0;
};

struct Record {
    Kind kind;
    std::size_t offset;  // payload offset
    std::size_t size;
};

class ArchiveReader {
public:
    explicit ArchiveReader(const std::vector<std::uint8_t>& b) : b_(b) {
        if (b_.size() < 16 || std::memcmp(b_.data(), kMagic, 8) != 0)
            throw ParseError("magic", 0, "not a CPGA checkpoint");
        std::uint32_t version = 0, count = 0;
        std::memcpy(&version, b_.data() + 8, 4);
        if (version != kCheckpointVersion)
            throw ParseError("version", 8, "unsupported checkpoint version " + std::to_string(version));
        std::memcpy(&count, b_.data() + 12, 4);
        std::size_t pos = 16;
        for (std::uint32_t i = 0; i < count; ++i) {
            std::uint32_t n = 0;
            need(pos, 4, "record name");
            std::memcpy(&n, b_.data() + pos, 4);
            need(pos + 4, n + 9, "record header");
            std::string name(reinterpret_cast<const char*>(b_.data() + pos + 4), n);
            const auto kind = static_cast<Kind>(b_[pos + 4 + n]);
            std::uint64_t len = 0;
            std::memcpy(&len, b_.data() + pos + 5 + n, 8);
            const std::size_t payload = pos + 13 + n;
            need(payload, len, name.c_str());
            records_.emplace(name, Record{kind, payload, static_cast<std::size_t>(len)});
            order_.push_back(name);
            pos = payload + len;
        }
        if (pos != b_.size()) throw ParseError("trailing data", pos, "unexpected bytes after the last record");
    }

    bool has(const std::string& name) const { return records_.count(name) != 0; }
    const std::vector<std::string>& names() const { return order_; }

    const Record& get(const std::string& name, Kind kind) const {
        auto it = records_.find(name);
        if (it == records_.end())
            throw ParseError(name, b_.size(), "missing checkpoint field '" + name + "'");
        if (it->second.kind != kind) throw ParseError(name, it->second.offset, "field has the wrong type");
        return it->second;
    }
    std::string text(const std::string& name) const {
        const auto& r = get(name, kText);
        return std::string(reinterpret_cast<const char*>(b_.data() + r.offset), r.size);
    }
    std::int64_t integer(const std::string& name) const {
        const auto& r = get(name, kInt);
        if (r.size != 8) throw ParseError(name, r.offset, "integer field must be 8 bytes");
        std::int64_t v = 0;
        std::memcpy(&v, b_.data() + r.offset, 8);
        return v;
    }
    Tensor<float> tensor(const std::string& name) const {
        const auto& r = get(name, kTensor);
        if (r.size < 16) throw ParseError(name, r.offset, "tensor field too short");
        std::int32_t d[4];
        std::memcpy(d, b_.data() + r.offset, 16);
        for (int k = 0; k < 4; ++k)
            if (d[k] < 0) throw ParseError(name, r.offset, "negative tensor extent");
        Tensor<float> t(nn::Shape{d[0], d[1], d[2], d[3]});
        if (r.size != 16 + t.data.size() * 4)
            throw ParseError(name, r.offset, "tensor payload does not match its shape " + t.shape.str());
        std::memcpy(t.data.data(), b_.data() + r.offset + 16, t.data.size() * 4);
        return t;
    }

private:
    void need(std::size_t pos, std::size_t n, const char* field) const {
        if (pos + n > b_.size())
            throw ParseError(field, pos,
                             "truncated: expected " + std::to_string(pos + n) + " bytes, file has " +
                                 std::to_string(b_.size()));
    }
    const std::vector<std::uint8_t>& b_;
    std::map<std::string, Record> records_;
    std::vector<std::string> order_;
};

template <typename Cfg>
Cfg parse_config(const ArchiveReader& r, const std::string& field) {
    const auto text = r.text(field);
    try {
        return Cfg::from_map(parse_key_values(text));
    } catch (const InvalidArgument& e) {
        throw ParseError(field, 0, e.what());
    }
}

}  // namespace

Checkpoint capture(const CpgaModel<float>& model, const Trainer* trainer) {
    Checkpoint c;
    c.model = model.config();
    c.seed = model.config().seed;
    for (const auto& p : model.parameters().parameters()) c.parameters.emplace_back(p.name, p.var.value());
    if (trainer) {
        c.train = trainer->config();
        c.iteration = trainer->iteration();
        c.seed = trainer->config().seed;
        c.workers = trainer->config().workers;
        c.adam_steps = trainer->optimizer().steps();
        c.adam_m = trainer->optimizer().first_moments();
        c.adam_v = trainer->optimizer().second_moments();
    }
    return c;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
    ArchiveWriter w;
    w.text("model_config", c.model.to_text());
    w.text("train_config", c.train.to_text());
    w.integer("iteration", c.iteration);
    w.integer("seed", static_cast<std::int64_t>(c.seed));
    w.integer("workers", c.workers);
    w.integer("parameter_count", static_cast<std::int64_t>(c.parameters.size()));
    for (std::size_t i = 0; i < c.parameters.size(); ++i) {
        w.text("param_name/" + std::to_string(i), c.parameters[i].first);
        w.tensor("param/" + c.parameters[i].first, c.parameters[i].second);
    }
    const bool with_state = !c.adam_m.empty();
    w.integer("adam/steps", with_state ? c.adam_steps : 0);
    if (with_state) {
        if (c.adam_m.size() != c.parameters.size() || c.adam_v.size() != c.parameters.size())
            throw InvalidArgument("optimizer state does not match the parameter list");
        for (std::size_t i = 0; i < c.parameters.size(); ++i) {
            w.tensor("adam/m/" + c.parameters[i].first, c.adam_m[i]);
            w.tensor("adam/v/" + c.parameters[i].first, c.adam_v[i]);
        }
    }
    return w.finish();
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
    const ArchiveReader r(bytes);
    Checkpoint c;
    c.model = parse_config<ModelConfig>(r, "model_config");
    c.train = parse_config<TrainConfig>(r, "train_config");
    c.iteration = r.integer("iteration");
    c.seed = static_cast<std::uint64_t>(r.integer("seed"));
    c.workers = static_cast<int>(r.integer("workers"));
    const auto count = r.integer("parameter_count");
    for (std::int64_t i = 0; i < count; ++i) {
        const auto name = r.text("param_name/" + std::to_string(i));
        c.parameters.emplace_back(name, r.tensor("param/" + name));
    }
    c.adam_steps = r.integer("adam/steps");
    if (c.adam_steps > 0) {
        for (const auto& [name, t] : c.parameters) {
            c.adam_m.push_back(r.tensor("adam/m/" + name));
            c.adam_v.push_back(r.tensor("adam/v/" + name));
        }
    }
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    const fs::path tmp = fs::path(path).concat(".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

void restore_parameters(CpgaModel<float>& model, const Checkpoint& ckpt) {
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& [name, t] : ckpt.parameters) by_name[name] = &t;
    for (const auto& p : model.parameters().parameters()) {
        auto it = by_name.find(p.name);
        if (it == by_name.end())
            throw ParseError("param/" + p.name, 0, "missing checkpoint field 'param/" + p.name + "'");
        if (it->second->shape != p.var.shape())
            throw ParseError("param/" + p.name, 0,
                             "shape " + it->second->shape.str() + " does not match the model's " + p.var.shape().str());
        nn::Var<float> v = p.var;
        v.mutable_value() = *it->second;
    }
    if (by_name.size() != model.parameters().parameters().size())
        throw InvalidArgument("checkpoint holds parameters the model does not define");
}

void restore_trainer(Trainer& trainer, const Checkpoint& ckpt) {
    restore_parameters(trainer.model(), ckpt);
    trainer.set_iteration(ckpt.iteration);
    auto& adam = trainer.optimizer();
    adam.set_steps(ckpt.adam_steps);
    if (ckpt.adam_steps == 0) return;
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ckpt.parameters.size(); ++i) index[ckpt.parameters[i].first] = i;
    const auto& params = trainer.model().parameters().parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::size_t k = index.at(params[i].name);
        adam.first_moments()[i] = ckpt.adam_m[k];
        adam.second_moments()[i] = ckpt.adam_v[k];
    }
}

}  // namespace cpga::train
