#include "cpga/model_config.hpp"

#include "cpga/error.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace cpga {

PriorFlags PriorFlags::ablation_variant(int model_index) {
    switch (model_index) {
        case 1: return {false, false, false};
        case 2: return {true, false, false};
        case 3: return {false, true, false};
        case 4: return {false, false, true};
        case 5: return {true, true, false};
        case 6: return {false, true, true};
        case 7: return {true, true, true};
        default: throw InvalidArgument("ablation variant must be in 1..7, got " + std::to_string(model_index));
    }
}

std::string PriorFlags::label() const {
    std::string s;
    auto add = [&](bool on, const char* name) {
        if (!on) return;
        if (!s.empty()) s += "+";
        s += name;
    };
    add(use_mv, "mv");
    add(use_pred, "pred");
    add(use_resid, "resid");
    return s.empty() ? "none" : s;
}

int ModelConfig::shift_channels() const { return static_cast<int>(std::lround(gamma * channels)); }

void ModelConfig::validate() const {
    auto fail = [](const std::string& m) { throw InvalidArgument("model config: " + m); };
    if (radius < 1) fail("T must be >= 1");
    if (channels < 4) fail("channels must be >= 4");
    if (scab_count < 0) fail("G must be >= 0");
    const double shifted = gamma * channels;
    if (gamma <= 0 || gamma > 1 || std::abs(shifted - std::round(shifted)) > 1e-9)
        fail("gamma * C must be a positive integer");
    if (shift_channels() % 2 != 0) fail("gamma * C must be even");
    if (shift_h < 0 || shift_w < 0) fail("shift amounts must be non-negative");
    if (scales != 3) fail("exactly three scales are supported");
    if (dcn_kernel != 3) fail("only a 3x3 deformable kernel is supported");
    if (nlau_reduction < 1 || channels % nlau_reduction != 0) fail("C must be divisible by nlau_reduction");
    if (ca_reduction < 1 || channels % ca_reduction != 0) fail("C must be divisible by the channel-attention reduction");
    if (search_range < 1) fail("search_range must be >= 1");
    if (nl_window < 1) fail("nl_window must be >= 1");
}

std::string gate_axis_name(GateAxis a) { return a == GateAxis::Channel ? "channel" : "temporal"; }

GateAxis parse_gate_axis(const std::string& s) {
    if (s == "channel") return GateAxis::Channel;
    if (s == "temporal") return GateAxis::Temporal;
    throw InvalidArgument("gate axis must be 'channel' or 'temporal', got '" + s + "'");
}

std::string ModelConfig::to_text() const {
    char gamma_buf[64];
    std::snprintf(gamma_buf, sizeof gamma_buf, "%.17g", gamma);
    char slope_buf[64];
    std::snprintf(slope_buf, sizeof slope_buf, "%.17g", leaky_slope);
    std::map<std::string, std::string> kv{
        {"ca_reduction", std::to_string(ca_reduction)},
        {"channels", std::to_string(channels)},
        {"dcn_kernel", std::to_string(dcn_kernel)},
        {"gamma", gamma_buf},
        {"gate_axis", gate_axis_name(gate_axis)},
        {"leaky_slope", slope_buf},
        {"nl_window", std::to_string(nl_window)},
        {"nl_window_force", nl_window_force ? "1" : "0"},
        {"nl_window_threshold", std::to_string(nl_window_threshold)},
        {"nlau_reduction", std::to_string(nlau_reduction)},
        {"radius", std::to_string(radius)},
        {"scab_count", std::to_string(scab_count)},
        {"scales", std::to_string(scales)},
        {"search_range", std::to_string(search_range)},
        {"seed", std::to_string(seed)},
        {"shift_h", std::to_string(shift_h)},
        {"shift_w", std::to_string(shift_w)},
        {"use_mv", priors.use_mv ? "1" : "0"},
        {"use_pred", priors.use_pred ? "1" : "0"},
        {"use_resid", priors.use_resid ? "1" : "0"},
        {"use_shifts", use_shifts ? "1" : "0"},
    };
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
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
    ModelConfig c;
    c.ca_reduction = static_cast<int>(num("ca_reduction"));
    c.channels = static_cast<int>(num("channels"));
    c.dcn_kernel = static_cast<int>(num("dcn_kernel"));
    c.gamma = real("gamma");
    c.gate_axis = parse_gate_axis(get("gate_axis"));
    c.leaky_slope = real("leaky_slope");
    c.nl_window = static_cast<int>(num("nl_window"));
    c.nl_window_force = num("nl_window_force") != 0;
    c.nl_window_threshold = static_cast<int>(num("nl_window_threshold"));
    c.nlau_reduction = static_cast<int>(num("nlau_reduction"));
    c.radius = static_cast<int>(num("radius"));
    c.scab_count = static_cast<int>(num("scab_count"));
    c.scales = static_cast<int>(num("scales"));
    c.search_range = static_cast<int>(num("search_range"));
    c.seed = static_cast<std::uint64_t>(num("seed"));
    c.shift_h = static_cast<int>(num("shift_h"));
    c.shift_w = static_cast<int>(num("shift_w"));
    c.priors.use_mv = num("use_mv") != 0;
    c.priors.use_pred = num("use_pred") != 0;
    c.priors.use_resid = num("use_resid") != 0;
    c.use_shifts = num("use_shifts") != 0;
    c.validate();
    return c;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InvalidArgument("malformed config line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

}  // namespace cpga
