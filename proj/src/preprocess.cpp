#include "lfa/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lfa/errors.hpp"

namespace lfa {

void PreprocessConfig::validate() const {
    if (target_aspect_ratio <= 0.0) throw ConfigError("preprocess: aspect ratio must be > 0");
    if (target_width < 1 || target_height < 1) {
        throw ConfigError("preprocess: target size must be >= 1x1");
    }
    const double ratio = static_cast<double>(target_width) / target_height;
    if (std::fabs(ratio - target_aspect_ratio) > 1e-9) {
        std::ostringstream os;
        os << "preprocess: target size " << target_width << "x" << target_height
           << " does not match aspect ratio " << target_aspect_ratio;
        throw ConfigError(os.str());
    }
    if (clip_length < 1) throw ConfigError("preprocess: clip_length must be >= 1");
}

BoundingBox lip_bbox(const LandmarkFrame& landmarks) {
    double x_min = landmarks.points[0].x, x_max = x_min;
    double y_min = landmarks.points[0].y, y_max = y_min;
    for (const Point2& p : landmarks.points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0.0 || p.y < 0.0) {
            throw UsageError("lip_bbox: landmark coordinates must be finite and non-negative");
        }
        x_min = std::min(x_min, p.x);
        x_max = std::max(x_max, p.x);
        y_min = std::min(y_min, p.y);
        y_max = std::max(y_max, p.y);
    }
    if (x_max <= x_min || y_max <= y_min) {
        throw DegenerateLandmarksError("lip_bbox: landmarks span zero width or height");
    }
    return {x_min, y_min, x_max, y_max};
}

BoundingBox adjust_aspect(const BoundingBox& box, double ar) {
    if (box.width() <= 0.0 || box.height() <= 0.0) {
        throw UsageError("adjust_aspect: invalid box");
    }
    if (ar <= 0.0) throw UsageError("adjust_aspect: aspect ratio must be > 0");
    double w = box.width();
    double h = box.height();
    if (w / h < ar) {
        w = h * ar;
    } else {
        h = w / ar;
    }
    const double cx = (box.x_min + box.x_max) / 2.0;
    const double cy = (box.y_min + box.y_max) / 2.0;
    return {cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
}

namespace {

double sample_bilinear(const Image& img, double sx, double sy, int c) {
    // Edge replication outside the frame.
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const double fx = sx - x0;
    const double fy = sy - y0;
    const auto cx = [&](int x) { return std::clamp(x, 0, img.width - 1); };
    const auto cy = [&](int y) { return std::clamp(y, 0, img.height - 1); };
    const double p00 = img.at(cy(y0), cx(x0), c);
    const double p01 = img.at(cy(y0), cx(x0 + 1), c);
    const double p10 = img.at(cy(y0 + 1), cx(x0), c);
    const double p11 = img.at(cy(y0 + 1), cx(x0 + 1), c);
    return (1.0 - fy) * ((1.0 - fx) * p00 + fx * p01) + fy * ((1.0 - fx) * p10 + fx * p11);
}

}  // namespace

Image crop_resize(const Image& frame, const BoundingBox& box, const PreprocessConfig& cfg) {
    cfg.validate();
    if (frame.width < 1 || frame.height < 1 || frame.channels < 1) {
        throw UsageError("crop_resize: empty frame");
    }
    if (box.width() <= 0.0 || box.height() <= 0.0) {
        throw UsageError("crop_resize: invalid box");
    }
    if (box.x_max <= 0.0 || box.x_min >= frame.width || box.y_max <= 0.0 ||
        box.y_min >= frame.height) {
        throw OutOfFrameError("crop_resize: box lies fully outside the frame");
    }
    Image out(cfg.target_height, cfg.target_width, frame.channels);
    const double sx_scale = box.width() / cfg.target_width;
    const double sy_scale = box.height() / cfg.target_height;
    for (int i = 0; i < cfg.target_height; ++i) {
        const double sy = box.y_min + (i + 0.5) * sy_scale - 0.5;
        for (int j = 0; j < cfg.target_width; ++j) {
            const double sx = box.x_min + (j + 0.5) * sx_scale - 0.5;
            for (int c = 0; c < frame.channels; ++c) {
                out.at(i, j, c) = sample_bilinear(frame, sx, sy, c);
            }
        }
    }
    return out;
}

std::vector<int> temporal_sample_indices(int n, int target) {
    if (n < 1) throw UsageError("temporal_sample: empty input");
    if (target < 1) throw UsageError("temporal_sample: target length must be >= 1");
    std::vector<int> idx;
    idx.reserve(target);
    if (n >= target) {
        if (target == 1) {
            idx.push_back(0);
        } else {
            for (int i = 0; i < target; ++i) {
                idx.push_back(static_cast<int>(
                    std::llround(static_cast<double>(i) * (n - 1) / (target - 1))));
            }
        }
    } else {
        for (int i = 0; i < n; ++i) idx.push_back(i);
        while (static_cast<int>(idx.size()) < target) idx.push_back(n - 1);
    }
    return idx;
}

std::vector<Image> temporal_sample(const std::vector<Image>& frames, int target) {
    const std::vector<int> idx = temporal_sample_indices(static_cast<int>(frames.size()), target);
    std::vector<Image> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(frames[static_cast<size_t>(i)]);
    return out;
}

VideoClip preprocess_clip(const std::vector<Image>& frames,
                          const std::vector<LandmarkFrame>& landmarks,
                          const PreprocessConfig& cfg, int client, int phrase, int emotion) {
    cfg.validate();
    if (frames.empty()) throw UsageError("preprocess_clip: no frames");
    if (frames.size() != landmarks.size()) {
        std::ostringstream os;
        os << "preprocess_clip: " << frames.size() << " frames but " << landmarks.size()
           << " landmark records";
        throw UsageError(os.str());
    }

    std::vector<Image> cropped;
    cropped.reserve(frames.size());
    for (size_t f = 0; f < frames.size(); ++f) {
        const auto with_frame = [f](const std::string& what) {
            return "frame " + std::to_string(f) + ": " + what;
        };
        try {
            BoundingBox box = adjust_aspect(lip_bbox(landmarks[f]), cfg.target_aspect_ratio);
            cropped.push_back(crop_resize(frames[f], box, cfg));
        } catch (const DegenerateLandmarksError& e) {
            throw DegenerateLandmarksError(with_frame(e.what()));
        } catch (const OutOfFrameError& e) {
            throw OutOfFrameError(with_frame(e.what()));
        } catch (const UsageError& e) {
            throw UsageError(with_frame(e.what()));
        }
    }

    const std::vector<int> idx =
        temporal_sample_indices(static_cast<int>(cropped.size()), cfg.clip_length);

    const int C = cropped[0].channels;
    Tensor t({cfg.clip_length, cfg.target_height, cfg.target_width, C});
    auto dst = t.mutable_data();
    size_t off = 0;
    for (int i : idx) {
        const Image& img = cropped[static_cast<size_t>(i)];
        for (double v : img.pixels) dst[off++] = std::clamp(v, 0.0, 1.0);
    }

    VideoClip clip;
    clip.frames = std::move(t);
    clip.client = client;
    clip.phrase = phrase;
    clip.emotion = emotion;
    return clip;
}

}  // namespace lfa
