#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "lfa/corpus.hpp"
#include "lfa/preprocess.hpp"

namespace lfa {

// Procedural lip-video generator. Identity splits into an appearance part
// (what the lips look like) and a behavior part (how they move), so the
// two traits carry independent signal.

struct IdentityParams {
    struct Appearance {
        double base_width = 40.0;      // px, full lip width at rest
        double base_height = 18.0;     // px, full outer height at rest
        double lip_thickness = 3.5;    // px, outer-to-inner contour gap
        std::array<double, 3> color{0.6, 0.3, 0.4};
        double corner_curvature = 0.0;
    } appearance;
    struct Behavior {
        double tempo_scale = 1.0;      // in (0.5, 2.0)
        double amplitude_scale = 1.0;  // in (0.5, 2.0)
        double phase_offset = 0.0;     // radians
        double asymmetry = 0.0;
    } behavior;
    std::array<double, 3> skin_tint{0.82, 0.67, 0.58};
};

// Per-phrase articulation track: (aperture, width, protrusion) control
// values over normalized time, each a bounded mixture of 3-5 sinusoids.
// The same phrase_id always yields the same base trajectory.
struct PhraseScript {
    int phrase_id = 0;
    struct Channel {
        std::vector<double> amplitude, frequency, phase;
        double eval(double t) const;
    };
    Channel aperture, width, protrusion;
};

struct EmotionParams {
    int emotion_id = 0;
    double tempo_multiplier = 1.0;  // in [0.7, 1.4]
    double corner_lift = 0.0;
    double aperture_bias = 0.0;
    double jitter_std = 0.0;
};

struct CorpusConfig {
    int n_clients = 20;
    int n_phrases = 4;
    int n_emotions = 3;
    int frames_per_video = 48;
    int frame_height = 64;
    int frame_width = 96;
    uint64_t master_seed = 42;
    int train_count = 12;
    int val_count = 4;
    int test_count = 4;

    void validate() const;  // throws ConfigError
};

IdentityParams make_identity(uint64_t seed);
PhraseScript make_phrase(int phrase_id);
EmotionParams make_emotion(int emotion_id);

struct SplitAssignment {
    std::vector<int> train, val, test;
};

// Open-set split: a seeded shuffle of the client ids cut into three
// pairwise-disjoint groups, each sorted ascending.
SplitAssignment make_splits(int n_clients, int train_count, int val_count, int test_count,
                            uint64_t master_seed);

struct Utterance {
    std::vector<Image> frames;
    std::vector<LandmarkFrame> landmarks;
};

// Renders one anti-aliased lip video. Frame count is
// round(frames_per_video / (tempo_scale * tempo_multiplier)); every frame
// carries 24 landmarks sampled at fixed arc-length fractions of the outer
// and inner contours.
Utterance render_utterance(const IdentityParams& identity, const PhraseScript& phrase,
                           const EmotionParams& emotion, uint64_t take_seed,
                           int frames_per_video, int frame_height, int frame_width);

// Writes one video per (client, phrase, emotion) plus landmark files and
// manifest.json with disjoint train/val/test client splits.
CorpusManifest gen_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace lfa
