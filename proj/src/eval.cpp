#include "lfa/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "lfa/errors.hpp"
#include "lfa/io_util.hpp"
#include "lfa/triplet.hpp"

namespace lfa {

using nlohmann::json;

std::string VerificationReport::to_json_text() const {
    json j;
    j["eer"] = eer;
    j["eer_threshold"] = eer_threshold;
    j["sweep_step"] = sweep_step;
    json curve_j = json::array();
    for (const RatePoint& p : curve) {
        curve_j.push_back({{"threshold", p.threshold}, {"far", p.far}, {"frr", p.frr}});
    }
    j["curve"] = std::move(curve_j);
    return j.dump(2) + "\n";
}

VerificationReport VerificationReport::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("report parse error: ") + e.what());
    }
    try {
        VerificationReport r;
        r.eer = j.at("eer").get<double>();
        r.eer_threshold = j.at("eer_threshold").get<double>();
        r.sweep_step = j.at("sweep_step").get<double>();
        for (const json& p : j.at("curve")) {
            r.curve.push_back({p.at("threshold").get<double>(), p.at("far").get<double>(),
                               p.at("frr").get<double>()});
        }
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("report field error: ") + e.what());
    }
}

ScoreSet score_pairs(const SlowFastModel& model, const CorpusManifest& manifest,
                     const ClipStore& clips, const std::string& split, int64_t pair_budget,
                     Rng& rng) {
    const std::vector<int>& split_clients = manifest.split_clients(split);
    if (split_clients.empty()) throw UsageError("score_pairs: split '" + split + "' is empty");

    const std::set<int> train_set(manifest.train_clients.begin(), manifest.train_clients.end());
    for (int c : split_clients) {
        if (train_set.count(c)) {
            throw ProtocolError("score_pairs: open-set violation, client " + std::to_string(c) +
                                " of split '" + split + "' is also a training client");
        }
    }

    ScoreSet scores;
    if (pair_budget <= 0) return scores;

    // Embed each distinct clip of the split once.
    std::map<ClipId, Embedding> embedded;
    const auto embedding_of = [&](const ClipId& id) -> const Embedding& {
        auto it = embedded.find(id);
        if (it == embedded.end()) {
            it = embedded.emplace(id, embed(model, clips.get(id))).first;
        }
        return it->second;
    };

    TripletSampler sampler(split_clients, manifest.n_phrases, manifest.n_emotions);
    const int64_t total = sampler.universe_size();
    scores.genuine.reserve(static_cast<size_t>(pair_budget));
    scores.imposter.reserve(static_cast<size_t>(pair_budget));
    for (int64_t i = 0; i < pair_budget; ++i) {
        const TripletSpec t =
            sampler.decode(static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(total))));
        const Embedding& a = embedding_of(t.anchor);
        const Embedding& p = embedding_of(t.positive);
        const Embedding& n = embedding_of(t.negative);
        scores.genuine.push_back(cosine_similarity(a, p));
        scores.imposter.push_back(cosine_similarity(a, n));
    }
    return scores;
}

std::pair<double, double> far_frr(const ScoreSet& scores, double threshold) {
    if (scores.genuine.empty() || scores.imposter.empty()) {
        throw UsageError("far_frr: both genuine and imposter scores are required");
    }
    int64_t rejected_genuine = 0;
    for (double s : scores.genuine) {
        if (s < threshold) ++rejected_genuine;
    }
    int64_t accepted_imposter = 0;
    for (double s : scores.imposter) {
        if (s >= threshold) ++accepted_imposter;
    }
    const double frr = static_cast<double>(rejected_genuine) /
                       static_cast<double>(scores.genuine.size());
    const double far = static_cast<double>(accepted_imposter) /
                       static_cast<double>(scores.imposter.size());
    return {far, frr};
}

std::vector<RatePoint> sweep(const ScoreSet& scores, double step) {
    if (step <= 0.0) throw UsageError("sweep: step must be > 0");
    const int64_t count = static_cast<int64_t>(std::floor(1.0 / step)) + 1;
    std::vector<RatePoint> curve;
    curve.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        const double t = static_cast<double>(i) * step;
        const auto [far, frr] = far_frr(scores, t);
        curve.push_back({t, far, frr});
    }
    return curve;
}

std::pair<double, double> eer_from_curve(const std::vector<RatePoint>& curve) {
    if (curve.empty()) throw UsageError("eer: empty curve");
    size_t best = 0;
    double best_gap = std::fabs(curve[0].far - curve[0].frr);
    for (size_t i = 1; i < curve.size(); ++i) {
        const double gap = std::fabs(curve[i].far - curve[i].frr);
        if (gap < best_gap) {
            best_gap = gap;
            best = i;
        }
    }
    return {(curve[best].far + curve[best].frr) / 2.0, curve[best].threshold};
}

double exact_eer(const ScoreSet& scores) {
    if (scores.genuine.empty() || scores.imposter.empty()) {
        throw UsageError("exact_eer: both score lists are required");
    }
    std::vector<double> g = scores.genuine;
    std::vector<double> im = scores.imposter;
    std::sort(g.begin(), g.end());
    std::sort(im.begin(), im.end());
    const double G = static_cast<double>(g.size());
    const double I = static_cast<double>(im.size());

    const auto frr_at = [&](double t) {
        return static_cast<double>(std::lower_bound(g.begin(), g.end(), t) - g.begin()) / G;
    };
    const auto far_at = [&](double t) {
        return static_cast<double>(im.end() - std::lower_bound(im.begin(), im.end(), t)) / I;
    };

    // Walk candidate thresholds (all observed scores, sorted). FRR rises and
    // FAR falls; find the first point where FRR >= FAR and interpolate with
    // the previous point.
    std::vector<double> candidates;
    candidates.reserve(g.size() + im.size());
    candidates.insert(candidates.end(), g.begin(), g.end());
    candidates.insert(candidates.end(), im.begin(), im.end());
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    double prev_far = 1.0, prev_frr = 0.0;
    for (double t : candidates) {
        const double far = far_at(t);
        const double frr = frr_at(t);
        if (frr >= far) {
            // Intersection of the segments (prev_frr -> frr) and (prev_far -> far).
            const double denom = (frr - prev_frr) - (far - prev_far);
            if (std::fabs(denom) < 1e-300) return (far + frr) / 2.0;
            const double s = (prev_far - prev_frr) / denom;
            return prev_frr + s * (frr - prev_frr);
        }
        prev_far = far;
        prev_frr = frr;
    }
    return (prev_far + prev_frr) / 2.0;
}

VerificationReport make_report(const ScoreSet& scores, double step) {
    VerificationReport r;
    r.curve = sweep(scores, step);
    const auto [eer, threshold] = eer_from_curve(r.curve);
    r.eer = eer;
    r.eer_threshold = threshold;
    r.sweep_step = step;
    return r;
}

void roc_export(const VerificationReport& report, const std::filesystem::path& path) {
    std::string text = "threshold,far,frr\n";
    char buf[96];
    for (const RatePoint& p : report.curve) {
        std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.6g\n", p.threshold, p.far, p.frr);
        text += buf;
    }
    std::snprintf(buf, sizeof(buf), "# eer,%.6g\n", report.eer);
    text += buf;
    std::snprintf(buf, sizeof(buf), "# eer_threshold,%.6g\n", report.eer_threshold);
    text += buf;
    atomic_write(path, text);
}

void save_report(const std::filesystem::path& path, const VerificationReport& report) {
    atomic_write(path, report.to_json_text());
}

VerificationReport load_report(const std::filesystem::path& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    return VerificationReport::from_json_text(std::string(bytes.begin(), bytes.end()));
}

}  // namespace lfa
