#include "cpga/codec.hpp"

#include "cpga/error.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <string>
#include <thread>

namespace cpga::codec {

void LumaSequence::validate() const {
    if (frames.empty()) throw InvalidArgument("luma sequence has no frames");
    if (width <= 0 || height <= 0) throw InvalidArgument("luma sequence has non-positive dimensions");
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto& f = frames[i];
        if (f.width != width || f.height != height ||
            f.data.size() != static_cast<std::size_t>(width) * height)
            throw InvalidArgument("frame " + std::to_string(i) + " does not match sequence dimensions");
    }
}

MotionVectorField::MotionVectorField(int block, int frame_w, int frame_h)
    : block_size(block),
      cols((frame_w + block - 1) / block),
      rows((frame_h + block - 1) / block),
      vectors(static_cast<std::size_t>(cols) * rows) {}

void CodecConfig::validate() const {
    if (block_size != 8 && block_size != 16)
        throw InvalidArgument("block size must be 8 or 16, got " + std::to_string(block_size));
    if (search_range < 0 || search_range > 64)
        throw InvalidArgument("search range must be in [0, 64], got " + std::to_string(search_range));
    quant_step(qp);
}

int quant_step(int qp) {
    switch (qp) {
        case 22: return 8;
        case 27: return 14;
        case 32: return 25;
        case 37: return 45;
        default:
            throw InvalidArgument("unsupported QP " + std::to_string(qp) +
                                  "; supported set is {22, 27, 32, 37}");
    }
}

int quantize(int residual, int step) {
    const int mag = (2 * std::abs(residual) + step) / (2 * step);
    return residual < 0 ? -mag : mag;
}

PaddedSequence pad_to_block_grid(const LumaSequence& seq, int block) {
    if (block != 8 && block != 16) throw InvalidArgument("block size must be 8 or 16");
    seq.validate();
    PaddedSequence out;
    out.orig_width = seq.width;
    out.orig_height = seq.height;
    const int pw = (seq.width + block - 1) / block * block;
    const int ph = (seq.height + block - 1) / block * block;
    out.sequence.width = pw;
    out.sequence.height = ph;
    out.sequence.frames.reserve(seq.frames.size());
    for (const auto& f : seq.frames) {
        Plane8 p(pw, ph);
        for (int y = 0; y < ph; ++y) {
            const int sy = std::min(y, seq.height - 1);
            for (int x = 0; x < pw; ++x) p(x, y) = f(std::min(x, seq.width - 1), sy);
        }
        out.sequence.frames.push_back(std::move(p));
    }
    return out;
}

LumaSequence crop_sequence(const LumaSequence& seq, int width, int height) {
    if (width > seq.width || height > seq.height || width <= 0 || height <= 0)
        throw InvalidArgument("crop exceeds sequence dimensions");
    LumaSequence out{width, height, {}};
    for (const auto& f : seq.frames) {
        Plane8 p(width, height);
        for (int y = 0; y < height; ++y)
            std::copy_n(&f(0, y), width, &p(0, y));
        out.frames.push_back(std::move(p));
    }
    return out;
}

namespace {

std::uint32_t block_sad(const Plane8& cur, const Plane8& ref, int x, int y, int rx, int ry, int block) {
    std::uint32_t sad = 0;
    for (int j = 0; j < block; ++j) {
        const std::uint8_t* a = &cur(x, y + j);
        const std::uint8_t* b = &ref(rx, ry + j);
        for (int i = 0; i < block; ++i) sad += static_cast<std::uint32_t>(std::abs(int(a[i]) - int(b[i])));
    }
    return sad;
}

// Lexicographic order (sad, |dx|+|dy|, dy, dx).
bool better(const MotionSearchResult& a, const MotionSearchResult& b) {
    if (a.sad != b.sad) return a.sad < b.sad;
    const int la = std::abs(a.dx) + std::abs(a.dy);
    const int lb = std::abs(b.dx) + std::abs(b.dy);
    if (la != lb) return la < lb;
    if (a.dy != b.dy) return a.dy < b.dy;
    return a.dx < b.dx;
}

std::uint8_t clip8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

// Quantizes `cur - pred` over one block region and writes the residual and reconstruction.
void code_block(const Plane8& cur, const Plane8& pred, int x0, int y0, int bw, int bh, int step,
                Plane16& residual, Plane8& recon) {
    for (int y = y0; y < y0 + bh; ++y) {
        for (int x = x0; x < x0 + bw; ++x) {
            const int r = int(cur(x, y)) - int(pred(x, y));
            const int rq = std::clamp(quantize(r, step) * step, -255, 255);
            residual(x, y) = static_cast<std::int16_t>(rq);
            recon(x, y) = clip8(int(pred(x, y)) + rq);
        }
    }
}

template <typename Fn>
void parallel_rows(int rows, int threads, Fn&& fn) {
    threads = std::clamp(threads, 1, std::max(rows, 1));
    if (threads == 1) {
        for (int r = 0; r < rows; ++r) fn(r);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (int r = t; r < rows; r += threads) fn(r);
        });
    for (auto& th : pool) th.join();
}

}  // namespace

MotionSearchResult block_motion_search(const Plane8& cur, const Plane8& ref, int origin_x,
                                       int origin_y, int block, int range) {
    const int min_dx = std::max(-range, -origin_x);
    const int max_dx = std::min(range, ref.width - block - origin_x);
    const int min_dy = std::max(-range, -origin_y);
    const int max_dy = std::min(range, ref.height - block - origin_y);

    MotionSearchResult best{0, 0, std::numeric_limits<std::uint32_t>::max()};
    bool have = false;
    for (int dy = min_dy; dy <= max_dy; ++dy) {
        for (int dx = min_dx; dx <= max_dx; ++dx) {
            MotionSearchResult cand{dx, dy, block_sad(cur, ref, origin_x, origin_y, origin_x + dx, origin_y + dy, block)};
            if (!have || better(cand, best)) {
                best = cand;
                have = true;
            }
        }
    }
    if (!have) throw InvalidArgument("block does not fit inside the reference frame");
    return best;
}

EncodeResult encode_sequence(const LumaSequence& seq, const CodecConfig& cfg, int threads) {
    cfg.validate();
    seq.validate();
    const int B = cfg.block_size;
    if (seq.width % B != 0 || seq.height % B != 0)
        throw InvalidArgument("sequence dimensions must be multiples of the block size; pad first");
    const int step = quant_step(cfg.qp);
    const int W = seq.width;
    const int H = seq.height;

    EncodeResult out;
    out.lq.width = W;
    out.lq.height = H;

    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        const Plane8& cur = seq.frames[t];
        FramePriors fp;
        fp.mv = MotionVectorField(B, W, H);
        fp.residual = Plane16(W, H);
        Plane8 recon(W, H);

        if (t == 0) {
            fp.type = FrameType::Intra;
            fp.predictive = Plane8(W, H, 128);
            code_block(cur, fp.predictive, 0, 0, W, H, step, fp.residual, recon);
        } else {
            fp.type = FrameType::Inter;
            fp.predictive = Plane8(W, H);
            const Plane8& ref = out.lq.frames[t - 1];
            parallel_rows(fp.mv.rows, threads, [&](int by) {
                for (int bx = 0; bx < fp.mv.cols; ++bx) {
                    const int x = bx * B;
                    const int y = by * B;
                    const auto m = block_motion_search(cur, ref, x, y, B, cfg.search_range);
                    fp.mv.at(bx, by) = {static_cast<std::int16_t>(m.dx), static_cast<std::int16_t>(m.dy)};
                    for (int j = 0; j < B; ++j)
                        std::copy_n(&ref(x + m.dx, y + m.dy + j), B, &fp.predictive(x, y + j));
                    code_block(cur, fp.predictive, x, y, B, B, step, fp.residual, recon);
                }
            });
        }
        out.lq.frames.push_back(std::move(recon));
        out.priors.frames.push_back(std::move(fp));
    }
    return out;
}

}  // namespace cpga::codec
