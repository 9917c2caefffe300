#include "lfa/synthcorpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lfa/clip_io.hpp"
#include "lfa/errors.hpp"
#include "lfa/rng.hpp"

namespace lfa {

namespace {
constexpr double kTau = 2.0 * std::numbers::pi;
}

void CorpusConfig::validate() const {
    if (n_emotions < 2) {
        throw ConfigError(
            "corpus: n_emotions must be >= 2; each anchor needs at least one other "
            "take of the same phrase to serve as a positive");
    }
    if (n_clients < 3) throw ConfigError("corpus: need at least 3 clients for 3 splits");
    if (n_phrases < 2) throw ConfigError("corpus: n_phrases must be >= 2");
    if (frames_per_video < 4) throw ConfigError("corpus: frames_per_video must be >= 4");
    if (frame_height < 32 || frame_width < 32) {
        throw ConfigError("corpus: frame size must be at least 32x32");
    }
    if (train_count < 1 || val_count < 1 || test_count < 1) {
        throw ConfigError("corpus: every split needs at least one client");
    }
    if (train_count + val_count + test_count != n_clients) {
        throw ConfigError("corpus: split counts must sum to n_clients");
    }
}

double PhraseScript::Channel::eval(double t) const {
    double v = 0.5;
    for (size_t k = 0; k < amplitude.size(); ++k) {
        v += amplitude[k] * std::sin(kTau * frequency[k] * t + phase[k]);
    }
    return std::clamp(v, 0.0, 1.0);
}

IdentityParams make_identity(uint64_t seed) {
    Rng rng(seed);
    IdentityParams id;
    auto& a = id.appearance;
    a.base_width = rng.uniform(32.0, 46.0);
    a.base_height = rng.uniform(14.0, 22.0);
    a.lip_thickness = rng.uniform(2.5, 5.0);
    a.color = {rng.uniform(0.45, 0.85), rng.uniform(0.15, 0.45), rng.uniform(0.25, 0.55)};
    a.corner_curvature = rng.uniform(-0.15, 0.25);
    auto& b = id.behavior;
    b.tempo_scale = rng.uniform(0.8, 1.3);
    b.amplitude_scale = rng.uniform(0.7, 1.3);
    b.phase_offset = rng.uniform(0.0, kTau);
    b.asymmetry = rng.uniform(-0.25, 0.25);
    id.skin_tint = {rng.uniform(0.74, 0.88), rng.uniform(0.58, 0.72), rng.uniform(0.48, 0.64)};
    return id;
}

namespace {

PhraseScript::Channel make_channel(Rng& rng) {
    PhraseScript::Channel ch;
    const int n = 3 + static_cast<int>(rng.next_below(3));  // 3..5 sinusoids
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
        ch.amplitude.push_back(rng.uniform(0.3, 1.0));
        ch.frequency.push_back(rng.uniform(0.5, 3.5));
        ch.phase.push_back(rng.uniform(0.0, kTau));
        total += ch.amplitude.back();
    }
    // Bound the mixture so eval stays strictly inside [0, 1].
    for (double& a : ch.amplitude) a *= 0.45 / total;
    return ch;
}

}  // namespace

PhraseScript make_phrase(int phrase_id) {
    Rng rng(child_seed(0x11b5u, "phrase_" + std::to_string(phrase_id)));
    PhraseScript s;
    s.phrase_id = phrase_id;
    s.aperture = make_channel(rng);
    s.width = make_channel(rng);
    s.protrusion = make_channel(rng);
    return s;
}

EmotionParams make_emotion(int emotion_id) {
    // Fixed presets for the common six states; further ids are generated.
    static const EmotionParams presets[] = {
        {0, 1.00, 0.00, 0.00, 0.004},   // neutral
        {1, 1.15, 0.18, 0.05, 0.008},   // happy
        {2, 0.85, -0.15, -0.04, 0.008}, // sad
        {3, 1.30, -0.08, 0.10, 0.012},  // anger
        {4, 0.92, -0.12, -0.02, 0.010}, // disgust
        {5, 1.25, 0.06, 0.08, 0.012},   // fear
    };
    if (emotion_id >= 0 && emotion_id < 6) return presets[emotion_id];
    Rng rng(child_seed(0xe407u, "emotion_" + std::to_string(emotion_id)));
    EmotionParams e;
    e.emotion_id = emotion_id;
    e.tempo_multiplier = rng.uniform(0.7, 1.4);
    e.corner_lift = rng.uniform(-0.18, 0.18);
    e.aperture_bias = rng.uniform(-0.08, 0.10);
    e.jitter_std = rng.uniform(0.004, 0.012);
    return e;
}

namespace {

struct LipShape {
    std::vector<Point2> outer;  // closed polygon
    std::vector<Point2> inner;
};

constexpr int kContourSamples = 72;

// Contour geometry for one frame, given the articulation control values.
LipShape lip_shape(const IdentityParams& id, double cx, double cy, double aperture,
                   double width_ctl, double protrusion, double corner_lift_extra) {
    const auto& a = id.appearance;
    const double half_w = 0.5 * a.base_width * (0.85 + 0.30 * width_ctl) *
                          (0.95 + 0.10 * protrusion);
    const double outer_hu = a.base_height * (0.30 + 0.25 * aperture);
    const double outer_hl = a.base_height * (0.32 + 0.28 * aperture);
    const double inner_hu = aperture * a.base_height * 0.26;
    const double inner_hl = aperture * a.base_height * 0.30;
    const double lift = (a.corner_curvature + 0.5 * corner_lift_extra) * a.base_height * 0.5;
    const double asym = id.behavior.asymmetry * a.base_height * 0.15;
    const double inner_hw = std::max(half_w - a.lip_thickness, half_w * 0.4);

    LipShape s;
    s.outer.reserve(kContourSamples);
    s.inner.reserve(kContourSamples);
    for (int m = 0; m < kContourSamples; ++m) {
        const double theta = kTau * m / kContourSamples;
        const double c = std::cos(theta);
        const double sn = std::sin(theta);
        const double warp = -lift * c * c - asym * c;
        {
            const double h = sn >= 0.0 ? outer_hu : outer_hl;
            s.outer.push_back({cx + half_w * c, cy - h * sn + warp});
        }
        {
            const double h = sn >= 0.0 ? inner_hu : inner_hl;
            s.inner.push_back({cx + inner_hw * c, cy - h * sn + 0.8 * warp});
        }
    }
    return s;
}

// Even-odd point-in-polygon.
bool inside(const std::vector<Point2>& poly, double x, double y) {
    bool in = false;
    const size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point2& pi = poly[i];
        const Point2& pj = poly[j];
        if ((pi.y > y) != (pj.y > y)) {
            const double xint = pj.x + (y - pj.y) / (pi.y - pj.y) * (pi.x - pj.x);
            if (x < xint) in = !in;
        }
    }
    return in;
}

// 24 landmarks: 12 at equal arc-length fractions of each closed contour.
void sample_landmarks(const LipShape& shape, LandmarkFrame& out) {
    auto sample_contour = [](const std::vector<Point2>& poly, int count, Point2* dst) {
        const size_t n = poly.size();
        std::vector<double> cum(n + 1, 0.0);
        for (size_t i = 0; i < n; ++i) {
            const Point2& p = poly[i];
            const Point2& q = poly[(i + 1) % n];
            cum[i + 1] = cum[i] + std::hypot(q.x - p.x, q.y - p.y);
        }
        const double total = cum[n];
        for (int k = 0; k < count; ++k) {
            const double target = total * k / count;
            const auto it = std::upper_bound(cum.begin(), cum.end(), target);
            size_t seg = static_cast<size_t>(std::max<ptrdiff_t>(it - cum.begin() - 1, 0));
            seg = std::min(seg, n - 1);
            const double seg_len = cum[seg + 1] - cum[seg];
            const double f = seg_len > 0.0 ? (target - cum[seg]) / seg_len : 0.0;
            const Point2& p = poly[seg];
            const Point2& q = poly[(seg + 1) % n];
            dst[k] = {p.x + f * (q.x - p.x), p.y + f * (q.y - p.y)};
        }
    };
    sample_contour(shape.outer, 12, out.points.data());
    sample_contour(shape.inner, 12, out.points.data() + 12);
}

void rasterize(const LipShape& shape, const IdentityParams& id, Image& img) {
    const std::array<double, 3> cavity{0.08, 0.04, 0.05};
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = id.skin_tint[c];
        }
    }
    // Bounding box of the outer contour, padded for anti-aliasing.
    double x_min = shape.outer[0].x, x_max = x_min, y_min = shape.outer[0].y, y_max = y_min;
    for (const Point2& p : shape.outer) {
        x_min = std::min(x_min, p.x);
        x_max = std::max(x_max, p.x);
        y_min = std::min(y_min, p.y);
        y_max = std::max(y_max, p.y);
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(x_min)) - 1);
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(x_max)) + 1);
    const int y0 = std::max(0, static_cast<int>(std::floor(y_min)) - 1);
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(y_max)) + 1);

    // 2x2 supersampling.
    constexpr double kSub[2] = {0.25, 0.75};
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (double dy : kSub) {
                for (double dx : kSub) {
                    const double sx = x + dx;
                    const double sy = y + dy;
                    const std::array<double, 3>* color = &id.skin_tint;
                    if (inside(shape.outer, sx, sy)) {
                        color = inside(shape.inner, sx, sy) ? &cavity : &id.appearance.color;
                    }
                    for (int c = 0; c < 3; ++c) acc[c] += (*color)[c];
                }
            }
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = acc[c] / 4.0;
        }
    }
}

}  // namespace

Utterance render_utterance(const IdentityParams& identity, const PhraseScript& phrase,
                           const EmotionParams& emotion, uint64_t take_seed,
                           int frames_per_video, int frame_height, int frame_width) {
    const double tempo = identity.behavior.tempo_scale * emotion.tempo_multiplier;
    const int frame_count =
        std::max(2, static_cast<int>(std::llround(frames_per_video / tempo)));
    Rng jitter(take_seed);

    Utterance utt;
    utt.frames.reserve(static_cast<size_t>(frame_count));
    utt.landmarks.reserve(static_cast<size_t>(frame_count));

    const double cx = frame_width / 2.0;
    const double cy0 = frame_height / 2.0;
    const auto& b = identity.behavior;

    for (int f = 0; f < frame_count; ++f) {
        const double u = static_cast<double>(f) / (frame_count - 1);
        const double t = u + b.phase_offset / kTau;

        double aperture = 0.5 + b.amplitude_scale * (phrase.aperture.eval(t) - 0.5);
        double width_ctl = 0.5 + b.amplitude_scale * (phrase.width.eval(t) - 0.5);
        double protrusion = phrase.protrusion.eval(t);

        aperture += emotion.aperture_bias;
        if (emotion.jitter_std > 0.0) {
            aperture += emotion.jitter_std * jitter.normal();
            width_ctl += emotion.jitter_std * jitter.normal();
            protrusion += emotion.jitter_std * jitter.normal();
        }
        aperture = std::clamp(aperture, 0.0, 1.0);
        width_ctl = std::clamp(width_ctl, 0.0, 1.0);
        protrusion = std::clamp(protrusion, 0.0, 1.0);

        const double cy = cy0 + 2.0 * (protrusion - 0.5);
        const LipShape shape =
            lip_shape(identity, cx, cy, aperture, width_ctl, protrusion, emotion.corner_lift);

        Image img(frame_height, frame_width, 3);
        rasterize(shape, identity, img);
        LandmarkFrame lm;
        sample_landmarks(shape, lm);
        utt.frames.push_back(std::move(img));
        utt.landmarks.push_back(lm);
    }
    return utt;
}

SplitAssignment make_splits(int n_clients, int train_count, int val_count, int test_count,
                            uint64_t master_seed) {
    if (train_count < 0 || val_count < 0 || test_count < 0 ||
        train_count + val_count + test_count != n_clients) {
        throw ConfigError("splits: counts must be non-negative and sum to n_clients");
    }
    std::vector<int> order(static_cast<size_t>(n_clients));
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(child_seed(master_seed, "splits"));
    for (size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[split_rng.next_below(i)]);
    }
    SplitAssignment s;
    s.train.assign(order.begin(), order.begin() + train_count);
    s.val.assign(order.begin() + train_count, order.begin() + train_count + val_count);
    s.test.assign(order.begin() + train_count + val_count, order.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

CorpusManifest gen_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create corpus directory " + out_dir.string());

    CorpusManifest m;
    m.n_clients = cfg.n_clients;
    m.n_phrases = cfg.n_phrases;
    m.n_emotions = cfg.n_emotions;
    m.frames_per_video = cfg.frames_per_video;
    m.frame_height = cfg.frame_height;
    m.frame_width = cfg.frame_width;
    m.master_seed = cfg.master_seed;

    const SplitAssignment splits = make_splits(cfg.n_clients, cfg.train_count, cfg.val_count,
                                               cfg.test_count, cfg.master_seed);
    m.train_clients = splits.train;
    m.val_clients = splits.val;
    m.test_clients = splits.test;

    for (int c = 0; c < cfg.n_clients; ++c) {
        const IdentityParams identity =
            make_identity(child_seed(cfg.master_seed, "client_" + std::to_string(c)));
        for (int p = 0; p < cfg.n_phrases; ++p) {
            const PhraseScript phrase = make_phrase(p);
            for (int e = 0; e < cfg.n_emotions; ++e) {
                const EmotionParams emotion = make_emotion(e);
                const uint64_t take_seed = child_seed(
                    cfg.master_seed, "take_" + std::to_string(c) + "_" + std::to_string(p) +
                                         "_" + std::to_string(e));
                const Utterance utt =
                    render_utterance(identity, phrase, emotion, take_seed,
                                     cfg.frames_per_video, cfg.frame_height, cfg.frame_width);

                const std::string rel_dir =
                    "client_" + std::to_string(c) + "/phrase_" + std::to_string(p);
                const std::string base = rel_dir + "/emotion_" + std::to_string(e);
                ClipEntry entry;
                entry.id = {c, p, e};
                entry.clip_path = base + ".clip";
                entry.landmarks_path = base + ".landmarks.csv";
                try {
                    write_clip_file(out_dir / entry.clip_path, tensor_from_frames(utt.frames));
                    write_landmarks_csv(out_dir / entry.landmarks_path, utt.landmarks);
                } catch (const IoError& err) {
                    throw IoError("corpus write failed for " + (out_dir / base).string() + ": " +
                                  err.what());
                }
                m.entries.push_back(std::move(entry));
            }
        }
    }
    save_manifest(out_dir / "manifest.json", m);
    return m;
}

}  // namespace lfa
