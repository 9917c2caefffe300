#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lfa/clip_io.hpp"
#include "lfa/io_util.hpp"
#include "lfa/preprocess.hpp"
#include "lfa/rng.hpp"
#include "test_util.hpp"

using namespace lfa;

namespace {

LandmarkFrame spread_landmarks(double x0, double x1, double y0, double y1) {
    LandmarkFrame lm;
    for (int i = 0; i < kLipLandmarkCount; ++i) {
        const double t = static_cast<double>(i) / (kLipLandmarkCount - 1);
        lm.points[i] = {x0 + t * (x1 - x0), y0 + (1.0 - t) * (y1 - y0)};
    }
    return lm;
}

Image gradient_image(int h, int w, int c) {
    Image img(h, w, c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                img.at(y, x, ch) = (0.3 * x + 0.7 * y + 0.1 * ch) / (w + h);
            }
        }
    }
    return img;
}

// Scalar reference for one bilinear sample with edge clamping.
double bilinear_ref(const Image& img, double sx, double sy, int c) {
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const double fx = sx - x0;
    const double fy = sy - y0;
    auto px = [&](int y, int x) {
        y = std::clamp(y, 0, img.height - 1);
        x = std::clamp(x, 0, img.width - 1);
        return img.at(y, x, c);
    };
    return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
           fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
}

}  // namespace

TEST_CASE("lip_bbox is the tight hull") {
    LandmarkFrame lm = spread_landmarks(10, 40, 20, 32);
    BoundingBox box = lip_bbox(lm);
    CHECK(box.x_min == doctest::Approx(10.0));
    CHECK(box.x_max == doctest::Approx(40.0));
    CHECK(box.y_min == doctest::Approx(20.0));
    CHECK(box.y_max == doctest::Approx(32.0));
}

TEST_CASE("lip_bbox rejects degenerate landmark sets") {
    LandmarkFrame lm;
    for (auto& p : lm.points) p = {5.0, 5.0};
    CHECK_THROWS_AS(lip_bbox(lm), DegenerateLandmarksError);

    // Collinear on one axis is degenerate too.
    for (int i = 0; i < kLipLandmarkCount; ++i) lm.points[i] = {5.0 + i, 7.0};
    CHECK_THROWS_AS(lip_bbox(lm), DegenerateLandmarksError);
}

TEST_CASE("lip_bbox matches a brute-force scan on random point sets") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        LandmarkFrame lm;
        double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
        for (auto& p : lm.points) {
            p = {rng.uniform(0.0, 100.0), rng.uniform(0.0, 60.0)};
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
        BoundingBox box = lip_bbox(lm);
        CHECK(box.x_min == xmin);
        CHECK(box.x_max == xmax);
        CHECK(box.y_min == ymin);
        CHECK(box.y_max == ymax);
    }
}

TEST_CASE("adjust_aspect hand traces") {
    const double ar = 5.0 / 3.0;
    {
        // ratio 2.5 >= ar, so height grows to 30 * 3/5 = 18.
        BoundingBox box{0, 0, 30, 12};
        BoundingBox out = adjust_aspect(box, ar);
        CHECK(out.width() == doctest::Approx(30.0).epsilon(1e-12));
        CHECK(out.height() == doctest::Approx(18.0).epsilon(1e-12));
    }
    {
        // Exact ratio is a fixed point.
        BoundingBox box{2, 3, 12, 9};
        BoundingBox out = adjust_aspect(box, ar);
        CHECK(out.x_min == doctest::Approx(2.0));
        CHECK(out.y_min == doctest::Approx(3.0));
        CHECK(out.x_max == doctest::Approx(12.0));
        CHECK(out.y_max == doctest::Approx(9.0));
    }
    {
        // ratio 1.0 < ar: width grows to 10 * 5/3.
        BoundingBox box{0, 0, 10, 10};
        BoundingBox out = adjust_aspect(box, ar);
        CHECK(out.width() == doctest::Approx(10.0 * ar).epsilon(1e-12));
        CHECK(out.height() == doctest::Approx(10.0).epsilon(1e-12));
    }
}

TEST_CASE("adjust_aspect never shrinks, keeps center, hits the ratio exactly") {
    Rng rng(4);
    const double ar = 5.0 / 3.0;
    for (int trial = 0; trial < 200; ++trial) {
        BoundingBox box;
        box.x_min = rng.uniform(0.0, 50.0);
        box.y_min = rng.uniform(0.0, 50.0);
        box.x_max = box.x_min + rng.uniform(0.5, 60.0);
        box.y_max = box.y_min + rng.uniform(0.5, 60.0);
        BoundingBox out = adjust_aspect(box, ar);
        CHECK(out.width() >= box.width() - 1e-12);
        CHECK(out.height() >= box.height() - 1e-12);
        CHECK(std::fabs((out.x_min + out.x_max) / 2 - (box.x_min + box.x_max) / 2) < 1e-9);
        CHECK(std::fabs((out.y_min + out.y_max) / 2 - (box.y_min + box.y_max) / 2) < 1e-9);
        CHECK(std::fabs(out.width() / out.height() - ar) < 1e-9);
    }
}

TEST_CASE("crop_resize of a pixel-aligned 30x18 box copies pixels") {
    Image img = gradient_image(36, 60, 3);
    BoundingBox box{5, 7, 35, 25};  // exactly 30x18
    PreprocessConfig cfg;
    Image out = crop_resize(img, box, cfg);
    REQUIRE(out.width == 30);
    REQUIRE(out.height == 18);
    for (int y = 0; y < 18; ++y) {
        for (int x = 0; x < 30; ++x) {
            for (int c = 0; c < 3; ++c) {
                CHECK(out.at(y, x, c) == doctest::Approx(img.at(y + 7, x + 5, c)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("crop_resize keeps constant frames constant") {
    Image img(20, 40, 2);
    for (double& v : img.pixels) v = 0.42;
    PreprocessConfig cfg;
    Image out = crop_resize(img, {3.7, 1.2, 33.7, 19.2}, cfg);
    for (double v : out.pixels) CHECK(v == doctest::Approx(0.42));
}

TEST_CASE("crop_resize matches the scalar bilinear oracle on probe pixels") {
    Image img = gradient_image(64, 96, 1);
    BoundingBox box{10.0, 14.0, 70.0, 50.0};  // 60x36 region
    PreprocessConfig cfg;
    Image out = crop_resize(img, box, cfg);
    const int probes[5][2] = {{0, 0}, {17, 29}, {9, 15}, {3, 22}, {12, 4}};
    for (const auto& p : probes) {
        const int i = p[0], j = p[1];
        const double sy = box.y_min + (i + 0.5) * box.height() / 18.0 - 0.5;
        const double sx = box.x_min + (j + 0.5) * box.width() / 30.0 - 0.5;
        CHECK(std::fabs(out.at(i, j, 0) - bilinear_ref(img, sx, sy, 0)) < 1e-5);
    }
}

TEST_CASE("crop_resize rejects fully external boxes, clamps partial ones") {
    Image img = gradient_image(20, 30, 1);
    PreprocessConfig cfg;
    CHECK_THROWS_AS(crop_resize(img, {100, 100, 130, 118}, cfg), OutOfFrameError);
    // Partially outside: clamped with edge replication, no throw.
    Image out = crop_resize(img, {-10, -6, 20, 12}, cfg);
    CHECK(out.width == 30);
    for (double v : out.pixels) CHECK(std::isfinite(v));
}

TEST_CASE("temporal_sample index selection") {
    {
        auto idx = temporal_sample_indices(32, 32);
        for (int i = 0; i < 32; ++i) CHECK(idx[i] == i);
    }
    {
        auto idx = temporal_sample_indices(64, 4);
        CHECK(idx == std::vector<int>{0, 21, 42, 63});
    }
    {
        auto idx = temporal_sample_indices(2, 4);
        CHECK(idx == std::vector<int>{0, 1, 1, 1});
    }
    CHECK_THROWS_AS(temporal_sample_indices(0, 4), UsageError);
}

TEST_CASE("preprocess_clip shape, determinism and static-landmark behavior") {
    PreprocessConfig cfg;
    cfg.clip_length = 8;

    std::vector<Image> frames;
    std::vector<LandmarkFrame> landmarks;
    for (int f = 0; f < 5; ++f) {
        frames.push_back(gradient_image(40, 64, 3));
        landmarks.push_back(spread_landmarks(12, 52, 8, 32));
    }
    VideoClip clip = preprocess_clip(frames, landmarks, cfg, 1, 2, 3);
    CHECK(clip.frames.shape() == std::vector<int64_t>{8, 18, 30, 3});
    CHECK(clip.client == 1);
    for (double v : clip.frames.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // Static landmarks + static frames: every output frame identical.
    const auto d = clip.frames.data();
    const size_t fsz = 18 * 30 * 3;
    for (size_t f = 1; f < 8; ++f) {
        for (size_t i = 0; i < fsz; ++i) CHECK(d[f * fsz + i] == d[i]);
    }

    VideoClip again = preprocess_clip(frames, landmarks, cfg, 1, 2, 3);
    for (int64_t i = 0; i < clip.frames.size(); ++i) {
        CHECK(again.frames.data()[i] == clip.frames.data()[i]);
    }
}

TEST_CASE("preprocess_clip attaches the frame index to per-frame failures") {
    PreprocessConfig cfg;
    cfg.clip_length = 4;
    std::vector<Image> frames(3, gradient_image(40, 64, 3));
    std::vector<LandmarkFrame> landmarks(3, spread_landmarks(12, 52, 8, 32));
    for (auto& p : landmarks[1].points) p = {9.0, 9.0};
    CHECK_THROWS_WITH_AS(preprocess_clip(frames, landmarks, cfg),
                         doctest::Contains("frame 1"), DegenerateLandmarksError);
}

TEST_CASE("clip file round-trip and format errors") {
    test_util::TempDir dir("clip");
    Rng rng(8);
    Tensor frames = test_util::random_tensor({3, 4, 5, 2}, rng, 0.0, 1.0);
    const auto path = dir.path() / "a.clip";
    write_clip_file(path, frames);
    Tensor back = read_clip_file(path);
    CHECK(back.shape() == frames.shape());
    // f32 quantization applies once; a second round-trip is exact.
    write_clip_file(path, back);
    Tensor back2 = read_clip_file(path);
    for (int64_t i = 0; i < back.size(); ++i) CHECK(back2.data()[i] == back.data()[i]);

    atomic_write(dir.path() / "bad.clip", std::string("CLP1garbage"));
    CHECK_THROWS_AS(read_clip_file(dir.path() / "bad.clip"), FormatError);
}

TEST_CASE("landmarks csv round-trip") {
    test_util::TempDir dir("lm");
    std::vector<LandmarkFrame> frames{spread_landmarks(1, 2, 3, 4),
                                      spread_landmarks(10, 20, 5, 9)};
    const auto path = dir.path() / "l.csv";
    write_landmarks_csv(path, frames);
    auto back = read_landmarks_csv(path);
    REQUIRE(back.size() == 2);
    for (size_t f = 0; f < 2; ++f) {
        for (int i = 0; i < kLipLandmarkCount; ++i) {
            CHECK(back[f].points[i].x ==
                  doctest::Approx(frames[f].points[i].x).epsilon(1e-6));
            CHECK(back[f].points[i].y ==
                  doctest::Approx(frames[f].points[i].y).epsilon(1e-6));
        }
    }
}
