#pragma once

// Toy hybrid codec: integer-pel full-search block motion estimation, IPPP
// prediction from the previous reconstruction, scalar residual quantization.
// Produces the reconstructed (LQ) sequence together with its coding priors.

#include <cstdint>
#include <vector>

namespace cpga::codec {

template <typename T>
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Plane() = default;
    Plane(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    T& operator()(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    const T& operator()(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const Plane&) const = default;
};

using Plane8 = Plane<std::uint8_t>;
using Plane16 = Plane<std::int16_t>;

struct LumaSequence {
    int width = 0;
    int height = 0;
    std::vector<Plane8> frames;

    /// Throws InvalidArgument if empty or if any frame has the wrong size.
    void validate() const;
    bool operator==(const LumaSequence&) const = default;
};

struct MotionVector {
    std::int16_t dx = 0;
    std::int16_t dy = 0;
    bool operator==(const MotionVector&) const = default;
};

struct MotionVectorField {
    int block_size = 16;
    int cols = 0;
    int rows = 0;
    std::vector<MotionVector> vectors;  // row-major, rows x cols

    MotionVectorField() = default;
    MotionVectorField(int block, int frame_w, int frame_h);

    MotionVector& at(int bx, int by) { return vectors[static_cast<std::size_t>(by) * cols + bx]; }
    const MotionVector& at(int bx, int by) const { return vectors[static_cast<std::size_t>(by) * cols + bx]; }

    bool operator==(const MotionVectorField&) const = default;
};

enum class FrameType : std::uint8_t { Intra = 0, Inter = 1 };

struct FramePriors {
    FrameType type = FrameType::Intra;
    MotionVectorField mv;  // all zero for intra frames
    Plane8 predictive;
    Plane16 residual;  // dequantized residual

    bool operator==(const FramePriors&) const = default;
};

struct CodingPriors {
    std::vector<FramePriors> frames;
    bool operator==(const CodingPriors&) const = default;
};

struct CodecConfig {
    int block_size = 16;
    int search_range = 8;
    int qp = 37;

    void validate() const;
    bool operator==(const CodecConfig&) const = default;
};

inline constexpr int kSupportedQps[] = {22, 27, 32, 37};

/// Quantization step for a supported QP: {22:8, 27:14, 32:25, 37:45}.
int quant_step(int qp);

/// Round-half-away-from-zero uniform quantizer index.
int quantize(int residual, int step);

struct PaddedSequence {
    LumaSequence sequence;
    int orig_width = 0;
    int orig_height = 0;
};

/// Grows each frame to the next multiple of `block` by replicating the last
/// row and column.
PaddedSequence pad_to_block_grid(const LumaSequence& seq, int block);

/// Crops every frame to the top-left `width` x `height` region.
LumaSequence crop_sequence(const LumaSequence& seq, int width, int height);

struct MotionSearchResult {
    int dx = 0;
    int dy = 0;
    std::uint32_t sad = 0;
    bool operator==(const MotionSearchResult&) const = default;
};

/// Full search over |dx|,|dy| <= range with the reference block constrained to
/// lie inside `ref`. Ties: smaller |dx|+|dy|, then smaller dy, then smaller dx.
MotionSearchResult block_motion_search(const Plane8& cur, const Plane8& ref, int origin_x,
                                       int origin_y, int block, int range);

struct EncodeResult {
    LumaSequence lq;
    CodingPriors priors;
};

/// Encodes a block-aligned sequence. Output is identical for every `threads`.
EncodeResult encode_sequence(const LumaSequence& seq, const CodecConfig& cfg, int threads = 1);

}  // namespace cpga::codec
