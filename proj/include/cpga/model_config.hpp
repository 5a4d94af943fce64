#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace cpga {

enum class GateAxis { Channel, Temporal };

/// Which coding priors reach the network. A disabled prior is substituted so
/// that tensor shapes never change: zero motion, the LQ frame in place of the
/// predictive frame, a zero residual.
struct PriorFlags {
    bool use_mv = true;
    bool use_pred = true;
    bool use_resid = true;

    bool operator==(const PriorFlags&) const = default;
    /// Model-1 .. Model-7 of the coding-prior ablation grid.
    static PriorFlags ablation_variant(int model_index);
    std::string label() const;
};

struct ModelConfig {
    int radius = 3;            // T; clips hold 2T + 1 frames
    int channels = 32;         // C
    int scab_count = 2;        // G
    double gamma = 0.125;      // proportion of channels that are shifted
    int shift_h = 2;
    int shift_w = 2;
    bool use_shifts = true;
    int scales = 3;
    int dcn_kernel = 3;
    int nlau_reduction = 2;
    int ca_reduction = 4;
    double leaky_slope = 0.1;
    int search_range = 8;      // MV maps are stored divided by this
    GateAxis gate_axis = GateAxis::Channel;
    int nl_window = 32;        // scale-0 attention tile size
    int nl_window_threshold = 96;
    bool nl_window_force = false;
    PriorFlags priors;
    std::uint64_t seed = 1;

    int frames() const { return 2 * radius + 1; }
    /// gamma * C; validate() guarantees it is an even integer.
    int shift_channels() const;
    /// Throws InvalidArgument on inconsistent settings.
    void validate() const;

    /// Canonical "key=value" lines, sorted by key.
    std::string to_text() const;
    static ModelConfig from_map(const std::map<std::string, std::string>& kv);

    bool operator==(const ModelConfig&) const = default;
};

std::map<std::string, std::string> parse_key_values(const std::string& text);
std::string gate_axis_name(GateAxis a);
GateAxis parse_gate_axis(const std::string& s);

}  // namespace cpga
