#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lfa/tensor.hpp"

namespace lfa {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

inline constexpr int kLipLandmarkCount = 24;

// 24 lip landmark points for one frame, in pixel coordinates.
struct LandmarkFrame {
    std::array<Point2, kLipLandmarkCount> points{};
};

// Continuous pixel-area box: a width-30 box spans e.g. [5, 35).
struct BoundingBox {
    double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
};

// Row-major H x W x C image, pixel values in [0, 1].
struct Image {
    int height = 0, width = 0, channels = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(int h, int w, int c)
        : height(h), width(w), channels(c),
          pixels(static_cast<size_t>(h) * w * c, 0.0) {}

    double& at(int y, int x, int c) {
        return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
    }
};

struct PreprocessConfig {
    double target_aspect_ratio = 5.0 / 3.0;
    int target_width = 30;
    int target_height = 18;
    int clip_length = 32;

    void validate() const;  // throws ConfigError
};

// Network-ready clip: frames is a [T, target_height, target_width, C]
// tensor with pixels in [0, 1].
struct VideoClip {
    Tensor frames;
    int client = -1;
    int phrase = -1;
    int emotion = -1;
};

// Tight axis-aligned hull of the 24 landmarks.
// Throws DegenerateLandmarksError when the points span zero width or height.
BoundingBox lip_bbox(const LandmarkFrame& landmarks);

// Grows the box symmetrically about its center until width/height == ar.
// Never shrinks either side.
BoundingBox adjust_aspect(const BoundingBox& box, double ar);

// Resamples the box region to target_width x target_height with bilinear
// interpolation; samples outside the frame replicate the nearest edge pixel.
// Throws OutOfFrameError if the box does not intersect the frame at all.
Image crop_resize(const Image& frame, const BoundingBox& box, const PreprocessConfig& cfg);

// Index selection for fixed-length clips: n >= target picks evenly spaced
// indices including first and last; n < target repeats the final frame.
std::vector<int> temporal_sample_indices(int n, int target);
std::vector<Image> temporal_sample(const std::vector<Image>& frames, int target);

// Full per-frame pipeline (lip_bbox -> adjust_aspect -> crop_resize), then
// temporal sampling to cfg.clip_length. Per-frame failures are rethrown
// with the frame index attached.
VideoClip preprocess_clip(const std::vector<Image>& frames,
                          const std::vector<LandmarkFrame>& landmarks,
                          const PreprocessConfig& cfg, int client = -1, int phrase = -1,
                          int emotion = -1);

}  // namespace lfa
