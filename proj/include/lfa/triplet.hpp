#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lfa/corpus.hpp"
#include "lfa/rng.hpp"
#include "lfa/slowfast.hpp"
#include "lfa/tensor.hpp"

namespace lfa {

enum class Hardness { Easy, SemiHard, Hard };

// Anchor/positive share client and phrase; the negative violates that:
// different client, or same client with a different phrase.
struct TripletSpec {
    ClipId anchor, positive, negative;
    std::optional<Hardness> hardness;

    bool valid() const;
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_distance(std::span<const double> a, std::span<const double> b);
double cosine_distance(std::span<const float> a, std::span<const float> b);

// max(dap - dan + margin, 0).
double triplet_loss(double dap, double dan, double margin);

// Unnormalized sum over the batch; the trainer optimizes the mean and logs
// both.
double batch_cost(std::span<const double> losses);

// easy:       dap + margin < dan
// semi-hard:  dap < dan <= dap + margin
// hard:       dan <= dap
Hardness classify_triplet(double dap, double dan, double margin);
const char* hardness_name(Hardness h);

// P*R*E * (E-1) * ((P-1)*R*E + (R-1)*E) valid triplets for P clients,
// R phrases, E emotions (one take per phrase-emotion pair).
int64_t triplet_universe_size(int64_t n_clients, int64_t n_phrases, int64_t n_emotions);

// Yields every valid triplet exactly once; refused above 1e6 triplets.
std::vector<TripletSpec> enumerate_triplets(int64_t n_clients, int64_t n_phrases,
                                            int64_t n_emotions);

enum class NegativeFilter {
    Any,                   // the whole negative universe
    SameClientOtherPhrase, // behavioral challenge set
    SamePhraseOtherClient, // physiological challenge set
};

// Uniform triplet sampling over the universe spanned by a client list, by
// index arithmetic; the universe is never materialized.
class TripletSampler {
public:
    TripletSampler(std::vector<int> clients, int n_phrases, int n_emotions,
                   NegativeFilter filter = NegativeFilter::Any);

    int64_t universe_size() const;
    TripletSpec decode(int64_t index) const;

    // Uniform draws: without replacement within a batch, with replacement
    // across batches. Throws UsageError if the universe is too small.
    std::vector<TripletSpec> sample_batch(int64_t batch_size, Rng& rng) const;

private:
    std::vector<int> clients_;
    int64_t P_, R_, E_;
    NegativeFilter filter_;
    int64_t neg_count_;
};

// Convenience over the manifest's train split.
std::vector<TripletSpec> sample_batch(const CorpusManifest& manifest, int64_t batch_size,
                                      Rng& rng);

struct TrainConfig {
    double margin = 0.7;
    int64_t batch_size = 64;
    int64_t max_iterations = 2000;
    double stop_threshold = 0.05;  // on the smoothed mean loss
    int smooth_window = 50;
    OptimizerConfig optimizer;
    uint64_t seed = 42;
    int64_t checkpoint_every = 0;  // 0 = only the final checkpoint
    int threads = 0;               // 0 = hardware concurrency, capped at 4
    NegativeFilter negative_filter = NegativeFilter::Any;

    // Restrict training to a subset of the manifest's train clients
    // (population-size experiments); empty = all.
    std::vector<int> client_subset;

    void validate() const;
    std::string to_json_text() const;
    static TrainConfig from_json_text(const std::string& text);
};

struct TrainHistory {
    std::vector<double> mean_loss;
    std::vector<double> smoothed_loss;  // arithmetic mean over the last smooth_window values
    std::vector<double> sum_loss;
    int64_t stop_iteration = 0;  // iterations actually executed

    std::string to_csv() const;  // iteration,mean_loss,smoothed_loss
};

// Siamese training loop: one shared-weight model embeds anchor, positive
// and negative; per iteration a sampled batch is embedded, the mean triplet
// loss backpropagated, and one optimizer step applied. Stops when the
// smoothed loss drops below stop_threshold or max_iterations is reached.
// When run_dir is given, writes config.json, history.csv and checkpoints.
TrainHistory train(SlowFastModel& model, const CorpusManifest& manifest, const ClipStore& clips,
                   const TrainConfig& cfg,
                   const std::filesystem::path* run_dir = nullptr);

}  // namespace lfa
