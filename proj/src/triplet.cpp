#include "lfa/triplet.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "lfa/checkpoint.hpp"
#include "lfa/errors.hpp"
#include "lfa/io_util.hpp"

namespace lfa {

using nlohmann::json;

bool TripletSpec::valid() const {
    if (anchor.client != positive.client || anchor.phrase != positive.phrase) return false;
    if (anchor == positive) return false;
    const bool neg_ok =
        negative.client != anchor.client ||
        (negative.client == anchor.client && negative.phrase != anchor.phrase);
    return neg_ok;
}

namespace {

template <typename T>
double cosine_sim_impl(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size() || a.empty()) {
        throw DimensionError("cosine: vector sizes differ or empty");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
        nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
    }
    if (na == 0.0 || nb == 0.0) throw UsageError("cosine: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    return cosine_sim_impl(a, b);
}
double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    return cosine_sim_impl(a, b);
}
double cosine_distance(std::span<const double> a, std::span<const double> b) {
    return 1.0 - cosine_sim_impl(a, b);
}
double cosine_distance(std::span<const float> a, std::span<const float> b) {
    return 1.0 - cosine_sim_impl(a, b);
}

double triplet_loss(double dap, double dan, double margin) {
    return std::max(dap - dan + margin, 0.0);
}

double batch_cost(std::span<const double> losses) {
    if (losses.empty()) throw UsageError("batch_cost: empty batch");
    double s = 0.0;
    for (double v : losses) s += v;
    return s;
}

Hardness classify_triplet(double dap, double dan, double margin) {
    if (dan <= dap) return Hardness::Hard;
    if (dap + margin < dan) return Hardness::Easy;
    return Hardness::SemiHard;
}

const char* hardness_name(Hardness h) {
    switch (h) {
        case Hardness::Easy: return "easy";
        case Hardness::SemiHard: return "semi_hard";
        case Hardness::Hard: return "hard";
    }
    return "?";
}

int64_t triplet_universe_size(int64_t n_clients, int64_t n_phrases, int64_t n_emotions) {
    if (n_clients < 2 || n_phrases < 2 || n_emotions < 2) {
        throw UsageError("triplet_universe_size: need at least 2 clients, phrases and emotions");
    }
    const int64_t anchors = n_clients * n_phrases * n_emotions;
    const int64_t positives = n_emotions - 1;
    const int64_t negatives =
        (n_clients - 1) * n_phrases * n_emotions + (n_phrases - 1) * n_emotions;
    return anchors * positives * negatives;
}

std::vector<TripletSpec> enumerate_triplets(int64_t n_clients, int64_t n_phrases,
                                            int64_t n_emotions) {
    const int64_t total = triplet_universe_size(n_clients, n_phrases, n_emotions);
    if (total > 1'000'000) {
        throw UsageError("enumerate_triplets: universe of " + std::to_string(total) +
                         " exceeds the 1e6 enumeration limit");
    }
    std::vector<TripletSpec> out;
    out.reserve(static_cast<size_t>(total));
    for (int c = 0; c < n_clients; ++c) {
        for (int p = 0; p < n_phrases; ++p) {
            for (int e = 0; e < n_emotions; ++e) {
                for (int pe = 0; pe < n_emotions; ++pe) {
                    if (pe == e) continue;
                    for (int nc = 0; nc < n_clients; ++nc) {
                        for (int np = 0; np < n_phrases; ++np) {
                            if (nc == c && np == p) continue;  // fits the positive definition
                            for (int ne = 0; ne < n_emotions; ++ne) {
                                out.push_back({{c, p, e}, {c, p, pe}, {nc, np, ne}, {}});
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

TripletSampler::TripletSampler(std::vector<int> clients, int n_phrases, int n_emotions,
                               NegativeFilter filter)
    : clients_(std::move(clients)),
      P_(static_cast<int64_t>(clients_.size())),
      R_(n_phrases),
      E_(n_emotions),
      filter_(filter) {
    if (E_ < 2) throw UsageError("sampler: need >= 2 emotions to form positives");
    switch (filter_) {
        case NegativeFilter::Any:
            if (P_ < 1 || R_ < 1) throw UsageError("sampler: empty universe");
            neg_count_ = (P_ - 1) * R_ * E_ + (R_ - 1) * E_;
            break;
        case NegativeFilter::SameClientOtherPhrase:
            neg_count_ = (R_ - 1) * E_;
            break;
        case NegativeFilter::SamePhraseOtherClient:
            neg_count_ = (P_ - 1) * E_;
            break;
    }
    if (neg_count_ < 1) throw UsageError("sampler: no valid negatives under this filter");
}

int64_t TripletSampler::universe_size() const {
    return P_ * R_ * E_ * (E_ - 1) * neg_count_;
}

TripletSpec TripletSampler::decode(int64_t index) const {
    if (index < 0 || index >= universe_size()) {
        throw UsageError("sampler: triplet index out of range");
    }
    const int64_t per_anchor = (E_ - 1) * neg_count_;
    const int64_t a = index / per_anchor;
    const int64_t rem = index % per_anchor;
    const int64_t q = rem / neg_count_;
    int64_t n = rem % neg_count_;

    const int64_t ci = a / (R_ * E_);
    const int64_t pr = (a / E_) % R_;
    const int64_t em = a % E_;
    const int64_t pe = q < em ? q : q + 1;

    int64_t nc = ci, np = pr, ne = 0;
    switch (filter_) {
        case NegativeFilter::Any: {
            const int64_t other_client_block = (P_ - 1) * R_ * E_;
            if (n < other_client_block) {
                const int64_t oc = n / (R_ * E_);
                nc = oc < ci ? oc : oc + 1;
                const int64_t rem2 = n % (R_ * E_);
                np = rem2 / E_;
                ne = rem2 % E_;
            } else {
                n -= other_client_block;
                const int64_t op = n / E_;
                np = op < pr ? op : op + 1;
                ne = n % E_;
            }
            break;
        }
        case NegativeFilter::SameClientOtherPhrase: {
            const int64_t op = n / E_;
            np = op < pr ? op : op + 1;
            ne = n % E_;
            break;
        }
        case NegativeFilter::SamePhraseOtherClient: {
            const int64_t oc = n / E_;
            nc = oc < ci ? oc : oc + 1;
            ne = n % E_;
            break;
        }
    }
    const auto client_of = [&](int64_t i) { return clients_[static_cast<size_t>(i)]; };
    TripletSpec t;
    t.anchor = {client_of(ci), static_cast<int>(pr), static_cast<int>(em)};
    t.positive = {client_of(ci), static_cast<int>(pr), static_cast<int>(pe)};
    t.negative = {client_of(nc), static_cast<int>(np), static_cast<int>(ne)};
    return t;
}

std::vector<TripletSpec> TripletSampler::sample_batch(int64_t batch_size, Rng& rng) const {
    const int64_t total = universe_size();
    if (batch_size < 1) throw UsageError("sample_batch: batch_size must be >= 1");
    if (batch_size > total) {
        throw UsageError("sample_batch: universe of " + std::to_string(total) +
                         " triplets is smaller than the batch of " + std::to_string(batch_size));
    }
    std::set<int64_t> seen;
    std::vector<TripletSpec> batch;
    batch.reserve(static_cast<size_t>(batch_size));
    while (static_cast<int64_t>(batch.size()) < batch_size) {
        const int64_t u = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(total)));
        if (!seen.insert(u).second) continue;
        batch.push_back(decode(u));
    }
    return batch;
}

std::vector<TripletSpec> sample_batch(const CorpusManifest& manifest, int64_t batch_size,
                                      Rng& rng) {
    TripletSampler sampler(manifest.train_clients, manifest.n_phrases, manifest.n_emotions);
    return sampler.sample_batch(batch_size, rng);
}

// ---------------------------------------------------------------------------
// TrainConfig serialization

namespace {

std::string filter_name(NegativeFilter f) {
    switch (f) {
        case NegativeFilter::Any: return "any";
        case NegativeFilter::SameClientOtherPhrase: return "same_client_other_phrase";
        case NegativeFilter::SamePhraseOtherClient: return "same_phrase_other_client";
    }
    return "any";
}

NegativeFilter filter_from_name(const std::string& s) {
    if (s == "any") return NegativeFilter::Any;
    if (s == "same_client_other_phrase") return NegativeFilter::SameClientOtherPhrase;
    if (s == "same_phrase_other_client") return NegativeFilter::SamePhraseOtherClient;
    throw ConfigError("unknown negative_filter '" + s + "'");
}

}  // namespace

void TrainConfig::validate() const {
    if (margin <= 0.0) throw ConfigError("train: margin must be > 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (max_iterations < 0) throw ConfigError("train: max_iterations must be >= 0");
    if (smooth_window < 1) throw ConfigError("train: smooth_window must be >= 1");
    if (stop_threshold < 0.0) throw ConfigError("train: stop_threshold must be >= 0");
    if (threads < 0) throw ConfigError("train: threads must be >= 0");
    if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
    if (optimizer.lr <= 0.0) throw ConfigError("train: learning rate must be > 0");
}

std::string TrainConfig::to_json_text() const {
    json j;
    j["margin"] = margin;
    j["batch_size"] = batch_size;
    j["max_iterations"] = max_iterations;
    j["stop_threshold"] = stop_threshold;
    j["smooth_window"] = smooth_window;
    j["optimizer"] = {
        {"kind", optimizer.kind == OptimizerConfig::Kind::Adam ? "adam" : "sgd"},
        {"lr", optimizer.lr},
        {"beta1", optimizer.beta1},
        {"beta2", optimizer.beta2},
        {"eps", optimizer.eps},
    };
    j["seed"] = seed;
    j["checkpoint_every"] = checkpoint_every;
    j["threads"] = threads;
    j["negative_filter"] = filter_name(negative_filter);
    j["client_subset"] = client_subset;
    return j.dump(2) + "\n";
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("train config parse error: ") + e.what());
    }
    TrainConfig cfg;
    try {
        if (j.contains("margin")) cfg.margin = j["margin"].get<double>();
        if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int64_t>();
        if (j.contains("max_iterations")) cfg.max_iterations = j["max_iterations"].get<int64_t>();
        if (j.contains("stop_threshold")) cfg.stop_threshold = j["stop_threshold"].get<double>();
        if (j.contains("smooth_window")) cfg.smooth_window = j["smooth_window"].get<int>();
        if (j.contains("optimizer")) {
            const json& o = j["optimizer"];
            if (o.contains("kind")) {
                const std::string kind = o["kind"].get<std::string>();
                if (kind == "adam") {
                    cfg.optimizer.kind = OptimizerConfig::Kind::Adam;
                } else if (kind == "sgd") {
                    cfg.optimizer.kind = OptimizerConfig::Kind::Sgd;
                } else {
                    throw ConfigError("unknown optimizer kind '" + kind + "'");
                }
            }
            if (o.contains("lr")) cfg.optimizer.lr = o["lr"].get<double>();
            if (o.contains("beta1")) cfg.optimizer.beta1 = o["beta1"].get<double>();
            if (o.contains("beta2")) cfg.optimizer.beta2 = o["beta2"].get<double>();
            if (o.contains("eps")) cfg.optimizer.eps = o["eps"].get<double>();
        }
        if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
        if (j.contains("checkpoint_every"))
            cfg.checkpoint_every = j["checkpoint_every"].get<int64_t>();
        if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
        if (j.contains("negative_filter"))
            cfg.negative_filter = filter_from_name(j["negative_filter"].get<std::string>());
        if (j.contains("client_subset"))
            cfg.client_subset = j["client_subset"].get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("train config field error: ") + e.what());
    }
    return cfg;
}

std::string TrainHistory::to_csv() const {
    std::string text = "iteration,mean_loss,smoothed_loss\n";
    char buf[96];
    for (size_t i = 0; i < mean_loss.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g\n", i, mean_loss[i], smoothed_loss[i]);
        text += buf;
    }
    return text;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

// Runs fn(chunk_index, worker_index) over chunks [0, n_chunks) with the
// given worker count. Chunk results must not depend on which worker runs
// them; combined with chunk-ordered reduction this keeps training output
// independent of the thread count.
void run_chunked(int64_t n_chunks, int workers,
                 const std::function<void(int64_t, int)>& fn) {
    if (n_chunks <= 0) return;
    workers = std::max<int>(1, static_cast<int>(std::min<int64_t>(workers, n_chunks)));
    if (workers == 1) {
        for (int64_t c = 0; c < n_chunks; ++c) fn(c, 0);
        return;
    }
    std::atomic<int64_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            int64_t c;
            while ((c = next.fetch_add(1)) < n_chunks) fn(c, w);
        });
    }
    for (auto& t : pool) t.join();
}

constexpr int64_t kClipChunk = 8;

void accumulate_cos_grad(std::span<const double> a, std::span<const double> b, double weight,
                         std::vector<double>& ga, std::vector<double>& gb) {
    // d/da [1 - a.b/(|a||b|)] = sim*a/|a|^2 - b/(|a||b|), symmetric for b.
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na2 += a[i] * a[i];
        nb2 += b[i] * b[i];
    }
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    const double sim = dot / (na * nb);
    for (size_t i = 0; i < a.size(); ++i) {
        ga[i] += weight * (sim * a[i] / na2 - b[i] / (na * nb));
        gb[i] += weight * (sim * b[i] / nb2 - a[i] / (na * nb));
    }
}

}  // namespace

TrainHistory train(SlowFastModel& model, const CorpusManifest& manifest, const ClipStore& clips,
                   const TrainConfig& cfg, const std::filesystem::path* run_dir) {
    cfg.validate();
    std::vector<int> clients =
        cfg.client_subset.empty() ? manifest.train_clients : cfg.client_subset;
    if (clients.empty()) throw UsageError("train: no training clients");
    if (!cfg.client_subset.empty()) {
        const std::set<int> allowed(manifest.train_clients.begin(),
                                    manifest.train_clients.end());
        for (int c : cfg.client_subset) {
            if (!allowed.count(c)) {
                throw UsageError("train: client_subset contains non-train client " +
                                 std::to_string(c));
            }
        }
    }

    TripletSampler sampler(clients, manifest.n_phrases, manifest.n_emotions,
                           cfg.negative_filter);

    // Preload and preprocess every clip this run can touch.
    for (int c : clients) {
        for (int p = 0; p < manifest.n_phrases; ++p) {
            for (int e = 0; e < manifest.n_emotions; ++e) {
                clips.get({c, p, e});
            }
        }
    }

    const int workers = cfg.threads > 0
                            ? cfg.threads
                            : std::max(1u, std::thread::hardware_concurrency());
    const int64_t embed_dim = model.config().embed_dim;
    Optimizer opt(cfg.optimizer);
    TrainHistory history;

    if (run_dir) {
        std::filesystem::create_directories(*run_dir);
        atomic_write(*run_dir / "config.json", cfg.to_json_text());
    }

    for (int64_t iter = 0; iter < cfg.max_iterations; ++iter) {
        const uint64_t batch_seed = child_seed(cfg.seed, static_cast<uint64_t>(iter));
        Rng rng(batch_seed);
        const std::vector<TripletSpec> batch = sampler.sample_batch(cfg.batch_size, rng);

        // Distinct clips, in first-appearance order.
        std::map<ClipId, int> clip_index;
        std::vector<ClipId> clip_ids;
        for (const TripletSpec& t : batch) {
            for (const ClipId& id : {t.anchor, t.positive, t.negative}) {
                if (clip_index.emplace(id, static_cast<int>(clip_ids.size())).second) {
                    clip_ids.push_back(id);
                }
            }
        }
        const int64_t n_clips = static_cast<int64_t>(clip_ids.size());

        // Phase 1: embed all distinct clips against the read-only model.
        std::vector<std::vector<double>> embs(static_cast<size_t>(n_clips));
        {
            const int64_t n_chunks = (n_clips + kClipChunk - 1) / kClipChunk;
            run_chunked(n_chunks, workers, [&](int64_t chunk, int) {
                const int64_t lo = chunk * kClipChunk;
                const int64_t hi = std::min(n_clips, lo + kClipChunk);
                for (int64_t i = lo; i < hi; ++i) {
                    const Tensor e =
                        embed_tensor(model, clips.get(clip_ids[static_cast<size_t>(i)]).frames);
                    embs[static_cast<size_t>(i)].assign(e.data().begin(), e.data().end());
                }
            });
        }

        // Phase 2: triplet losses and embedding-space gradients.
        std::vector<std::vector<double>> seeds(
            static_cast<size_t>(n_clips), std::vector<double>(static_cast<size_t>(embed_dim)));
        double sum_loss = 0.0;
        const double w = 1.0 / static_cast<double>(cfg.batch_size);
        for (const TripletSpec& t : batch) {
            const int ia = clip_index[t.anchor];
            const int ip = clip_index[t.positive];
            const int in = clip_index[t.negative];
            const double dap = cosine_distance(std::span<const double>(embs[ia]),
                                               std::span<const double>(embs[ip]));
            const double dan = cosine_distance(std::span<const double>(embs[ia]),
                                               std::span<const double>(embs[in]));
            const double loss = triplet_loss(dap, dan, cfg.margin);
            sum_loss += loss;
            if (loss > 0.0) {
                accumulate_cos_grad(embs[ia], embs[ip], w, seeds[ia], seeds[ip]);
                accumulate_cos_grad(embs[ia], embs[in], -w, seeds[ia], seeds[in]);
            }
        }
        const double mean_loss = sum_loss / static_cast<double>(cfg.batch_size);
        if (!std::isfinite(mean_loss)) {
            throw NonFiniteLossError("train: non-finite loss at iteration " +
                                         std::to_string(iter) + " (batch seed " +
                                         std::to_string(batch_seed) + ")",
                                     iter, batch_seed);
        }

        // Phase 3: backprop per clip; per-chunk partial gradients keep the
        // reduction order fixed regardless of worker count.
        const size_t n_params = model.parameters().size();
        const int64_t n_chunks = (n_clips + kClipChunk - 1) / kClipChunk;
        std::vector<std::vector<std::vector<double>>> partials(
            static_cast<size_t>(n_chunks));
        {
            std::vector<SlowFastModel> replicas;
            const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(n_chunks)));
            replicas.reserve(static_cast<size_t>(n_workers));
            for (int i = 0; i < n_workers; ++i) replicas.push_back(model.clone());

            run_chunked(n_chunks, workers, [&](int64_t chunk, int worker) {
                SlowFastModel& replica = replicas[static_cast<size_t>(worker)];
                for (Parameter& p : replica.parameters()) p.tensor.clear_grad();
                const int64_t lo = chunk * kClipChunk;
                const int64_t hi = std::min(n_clips, lo + kClipChunk);
                bool any = false;
                for (int64_t i = lo; i < hi; ++i) {
                    const std::vector<double>& seed = seeds[static_cast<size_t>(i)];
                    bool nonzero = false;
                    for (double v : seed) {
                        if (v != 0.0) {
                            nonzero = true;
                            break;
                        }
                    }
                    if (!nonzero) continue;
                    any = true;
                    Tape tape;
                    embed_tensor(replica, clips.get(clip_ids[static_cast<size_t>(i)]).frames,
                                 &tape);
                    tape.backward(Tensor({embed_dim}, seed));
                }
                auto& out = partials[static_cast<size_t>(chunk)];
                out.resize(n_params);
                for (size_t p = 0; p < n_params; ++p) {
                    const Tensor& t = replica.parameters()[p].tensor;
                    if (any && t.has_grad()) {
                        out[p].assign(t.grad().begin(), t.grad().end());
                    } else {
                        out[p].assign(static_cast<size_t>(t.size()), 0.0);
                    }
                }
            });
        }

        for (Parameter& p : model.parameters()) p.tensor.zero_grad();
        for (int64_t chunk = 0; chunk < n_chunks; ++chunk) {
            for (size_t p = 0; p < n_params; ++p) {
                auto g = model.parameters()[p].tensor.mutable_grad();
                const auto& part = partials[static_cast<size_t>(chunk)][p];
                for (size_t i = 0; i < g.size(); ++i) g[i] += part[i];
            }
        }
        opt.step(model.parameters());

        history.mean_loss.push_back(mean_loss);
        history.sum_loss.push_back(sum_loss);
        const size_t win = static_cast<size_t>(cfg.smooth_window);
        const size_t from = history.mean_loss.size() > win ? history.mean_loss.size() - win : 0;
        double acc = 0.0;
        for (size_t i = from; i < history.mean_loss.size(); ++i) acc += history.mean_loss[i];
        const double smoothed = acc / static_cast<double>(history.mean_loss.size() - from);
        history.smoothed_loss.push_back(smoothed);
        history.stop_iteration = iter + 1;

        if (run_dir && cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_%06lld.ckpt",
                          static_cast<long long>(iter + 1));
            save_model(*run_dir / name, model);
        }
        if (smoothed < cfg.stop_threshold) break;
    }

    if (run_dir) {
        atomic_write(*run_dir / "history.csv", history.to_csv());
        save_model(*run_dir / "model.ckpt", model);
    }
    return history;
}

}  // namespace lfa
