#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lfa/corpus.hpp"
#include "lfa/rng.hpp"
#include "lfa/slowfast.hpp"

namespace lfa {

// Cosine similarities of anchor-positive (genuine) and anchor-negative
// (imposter) pairs.
struct ScoreSet {
    std::vector<double> genuine;
    std::vector<double> imposter;
};

struct RatePoint {
    double threshold = 0.0;
    double far = 0.0;
    double frr = 0.0;
};

struct VerificationReport {
    std::vector<RatePoint> curve;
    double eer = 0.0;
    double eer_threshold = 0.0;
    double sweep_step = 0.0;

    std::string to_json_text() const;
    static VerificationReport from_json_text(const std::string& text);
};

// Samples pair_budget triplets from the split's universe, embeds each clip
// once, and scores cos(A,P) as genuine and cos(A,N) as imposter. Refuses
// to run when the split shares any client with training (open-set guard).
ScoreSet score_pairs(const SlowFastModel& model, const CorpusManifest& manifest,
                     const ClipStore& clips, const std::string& split, int64_t pair_budget,
                     Rng& rng);

// Accept iff similarity >= threshold. FRR over genuine, FAR over imposter.
std::pair<double, double> far_frr(const ScoreSet& scores, double threshold);

// far_frr at thresholds 0, step, 2*step, ..., 1.
std::vector<RatePoint> sweep(const ScoreSet& scores, double step = 0.001);

// Grid point minimizing |FAR - FRR|, ties toward the lower threshold;
// returns ((FAR+FRR)/2, threshold).
std::pair<double, double> eer_from_curve(const std::vector<RatePoint>& curve);

// Interpolated equal-error rate straight from the sorted score lists,
// independent of any threshold grid.
double exact_eer(const ScoreSet& scores);

VerificationReport make_report(const ScoreSet& scores, double step = 0.001);

// CSV: header threshold,far,frr; one row per grid point; trailing comment
// rows for eer and eer_threshold.
void roc_export(const VerificationReport& report, const std::filesystem::path& path);

void save_report(const std::filesystem::path& path, const VerificationReport& report);
VerificationReport load_report(const std::filesystem::path& path);

}  // namespace lfa
