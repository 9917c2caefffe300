#include "lfa/clip_io.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "lfa/errors.hpp"
#include "lfa/io_util.hpp"

namespace lfa {

namespace {
constexpr char kMagic[4] = {'C', 'L', 'P', '1'};
}

void write_clip_file(const std::filesystem::path& path, const Tensor& frames) {
    if (frames.shape().size() != 4) {
        throw DimensionError("clip file: frames must be a rank-4 [T,H,W,C] tensor");
    }
    ByteWriter w;
    w.raw(kMagic, 4);
    for (int64_t d : frames.shape()) w.u32(static_cast<uint32_t>(d));
    for (double v : frames.data()) w.f32(static_cast<float>(v));
    atomic_write(path, w.bytes());
}

Tensor read_clip_file(const std::filesystem::path& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    ByteReader r(bytes);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("bad clip magic in " + path.string());
    }
    std::vector<int64_t> shape(4);
    uint64_t n = 1;
    for (auto& d : shape) {
        d = r.u32();
        n *= static_cast<uint64_t>(d);
    }
    if (n * 4 != r.remaining()) throw FormatError("clip payload size mismatch in " + path.string());
    std::vector<double> data(n);
    for (uint64_t i = 0; i < n; ++i) data[i] = static_cast<double>(r.f32());
    return Tensor(std::move(shape), std::move(data));
}

std::vector<Image> frames_from_tensor(const Tensor& t) {
    if (t.shape().size() != 4) throw DimensionError("frames_from_tensor: need rank-4 tensor");
    const int T = static_cast<int>(t.dim(0));
    const int H = static_cast<int>(t.dim(1));
    const int W = static_cast<int>(t.dim(2));
    const int C = static_cast<int>(t.dim(3));
    std::vector<Image> frames;
    frames.reserve(static_cast<size_t>(T));
    const double* src = t.data().data();
    const size_t frame_size = static_cast<size_t>(H) * W * C;
    for (int f = 0; f < T; ++f) {
        Image img(H, W, C);
        std::copy(src + f * frame_size, src + (f + 1) * frame_size, img.pixels.begin());
        frames.push_back(std::move(img));
    }
    return frames;
}

Tensor tensor_from_frames(const std::vector<Image>& frames) {
    if (frames.empty()) throw UsageError("tensor_from_frames: no frames");
    const int H = frames[0].height, W = frames[0].width, C = frames[0].channels;
    Tensor t({static_cast<int64_t>(frames.size()), H, W, C});
    auto dst = t.mutable_data();
    size_t off = 0;
    for (const Image& img : frames) {
        if (img.height != H || img.width != W || img.channels != C) {
            throw DimensionError("tensor_from_frames: inconsistent frame sizes");
        }
        std::copy(img.pixels.begin(), img.pixels.end(), dst.begin() + off);
        off += img.pixels.size();
    }
    return t;
}

void write_landmarks_csv(const std::filesystem::path& path,
                         const std::vector<LandmarkFrame>& frames) {
    std::string text;
    char buf[64];
    for (const LandmarkFrame& lm : frames) {
        for (int i = 0; i < kLipLandmarkCount; ++i) {
            std::snprintf(buf, sizeof(buf), "%.6f,%.6f", lm.points[i].x, lm.points[i].y);
            if (i) text += ',';
            text += buf;
        }
        text += '\n';
    }
    atomic_write(path, text);
}

std::vector<LandmarkFrame> read_landmarks_csv(const std::filesystem::path& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    std::vector<LandmarkFrame> frames;
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        LandmarkFrame lm;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (int i = 0; i < 2 * kLipLandmarkCount; ++i) {
            double v = 0.0;
            auto [next, ec] = std::from_chars(p, end, v);
            if (ec != std::errc()) {
                throw FormatError("landmarks csv: bad number at line " + std::to_string(lineno) +
                                  " in " + path.string());
            }
            if (i % 2 == 0) {
                lm.points[i / 2].x = v;
            } else {
                lm.points[i / 2].y = v;
            }
            p = next;
            if (p < end && *p == ',') ++p;
        }
        frames.push_back(lm);
    }
    return frames;
}

}  // namespace lfa
