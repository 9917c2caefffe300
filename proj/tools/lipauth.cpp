// lipauth: batch pipeline driver for the lip-motion verification stack.
// Subcommands: gen-corpus, train, eval, enroll, verify.
//
// Exit codes: 0 ok, 2 config error, 3 I/O error, 4 non-finite training
// loss, 5 open-set protocol violation, 6 not enrolled, 7 enrollment
// conflict, 8 model/checkpoint mismatch.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "lfa/authstore.hpp"
#include "lfa/clip_io.hpp"
#include "lfa/corpus.hpp"
#include "lfa/errors.hpp"
#include "lfa/eval.hpp"
#include "lfa/io_util.hpp"
#include "lfa/run_config.hpp"
#include "lfa/synthcorpus.hpp"
#include "lfa/triplet.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNonFinite = 4;
constexpr int kExitProtocol = 5;
constexpr int kExitNotEnrolled = 6;
constexpr int kExitConflict = 7;
constexpr int kExitModelMismatch = 8;

lfa::RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return lfa::RunConfig{};
    return lfa::load_run_config(path);
}

lfa::PreprocessConfig preprocess_for_model(const lfa::SlowFastConfig& model) {
    lfa::PreprocessConfig p;
    p.target_width = static_cast<int>(model.input_width);
    p.target_height = static_cast<int>(model.input_height);
    p.target_aspect_ratio =
        static_cast<double>(model.input_width) / static_cast<double>(model.input_height);
    p.clip_length = static_cast<int>(model.clip_length);
    return p;
}

// Loads the clip for enroll/verify. With a landmark file the clip is raw
// frames to preprocess; without one it must already be network-ready.
lfa::VideoClip load_cli_clip(const std::string& clip_path, const std::string& landmarks_path,
                             const lfa::SlowFastConfig& model_cfg) {
    const lfa::Tensor raw = lfa::read_clip_file(clip_path);
    if (landmarks_path.empty()) {
        lfa::VideoClip clip;
        clip.frames = raw;
        return clip;
    }
    const auto frames = lfa::frames_from_tensor(raw);
    const auto landmarks = lfa::read_landmarks_csv(landmarks_path);
    return lfa::preprocess_clip(frames, landmarks, preprocess_for_model(model_cfg));
}

int cmd_gen_corpus(const std::string& config_path, const std::string& out_dir,
                   std::optional<uint64_t> seed) {
    lfa::RunConfig cfg = load_config_or_default(config_path);
    if (seed) cfg.corpus.master_seed = *seed;
    cfg.corpus.validate();
    const lfa::CorpusManifest m = lfa::gen_corpus(cfg.corpus, out_dir);
    std::printf("corpus: %zu clips, splits %zu/%zu/%zu -> %s\n", m.entries.size(),
                m.train_clients.size(), m.val_clients.size(), m.test_clients.size(),
                (std::filesystem::path(out_dir) / "manifest.json").string().c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& manifest_path,
              const std::string& out_dir, std::optional<int64_t> max_iterations,
              std::optional<int> threads, std::optional<uint64_t> seed) {
    lfa::RunConfig cfg = load_config_or_default(config_path);
    if (max_iterations) cfg.train.max_iterations = *max_iterations;
    if (threads) cfg.train.threads = *threads;
    if (seed) cfg.train.seed = *seed;
    cfg.validate();

    const lfa::CorpusManifest manifest = lfa::load_manifest(manifest_path);
    const lfa::ClipStore clips(std::filesystem::path(manifest_path).parent_path(), manifest,
                               cfg.preprocess);
    lfa::SlowFastModel model = lfa::build(cfg.model, cfg.train.seed);

    const std::filesystem::path run_dir(out_dir);
    const lfa::TrainHistory history = lfa::train(model, manifest, clips, cfg.train, &run_dir);
    if (history.mean_loss.empty()) {
        std::printf("train: 0 iterations, checkpoint equals initialization\n");
    } else {
        std::printf("train: stopped after %lld iterations, smoothed loss %.6f\n",
                    static_cast<long long>(history.stop_iteration),
                    history.smoothed_loss.back());
    }
    std::printf("train: checkpoint -> %s\n", (run_dir / "model.ckpt").string().c_str());
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest_path,
             const std::string& split, const std::string& out_path, std::string roc_path,
             std::optional<int64_t> budget, std::optional<double> step,
             std::optional<uint64_t> seed) {
    if (split == "train") {
        throw lfa::ProtocolError(
            "eval: training clients are enrolled by definition; evaluate on val or test");
    }
    lfa::EvalSettings settings;
    settings.split = split;
    if (budget) settings.pair_budget = *budget;
    if (step) settings.sweep_step = *step;
    if (seed) settings.seed = *seed;

    const lfa::SlowFastModel model = lfa::load_model(checkpoint);
    const lfa::CorpusManifest manifest = lfa::load_manifest(manifest_path);
    const lfa::ClipStore clips(std::filesystem::path(manifest_path).parent_path(), manifest,
                               preprocess_for_model(model.config()));

    lfa::Rng rng(settings.seed);
    const lfa::ScoreSet scores =
        lfa::score_pairs(model, manifest, clips, settings.split, settings.pair_budget, rng);
    const lfa::VerificationReport report = lfa::make_report(scores, settings.sweep_step);
    lfa::save_report(out_path, report);
    if (roc_path.empty()) roc_path = out_path + ".roc.csv";
    lfa::roc_export(report, roc_path);
    std::printf("eval: split %s, %zu pairs, eer %.4f at threshold %.3f (exact %.4f)\n",
                settings.split.c_str(), scores.genuine.size(), report.eer,
                report.eer_threshold, lfa::exact_eer(scores));
    return 0;
}

int cmd_enroll(const std::string& store_path, const std::string& client,
               const std::string& phrase, const std::string& clip_path,
               const std::string& landmarks_path, const std::string& checkpoint,
               std::optional<int64_t> timestamp) {
    const lfa::SlowFastModel model = lfa::load_model(checkpoint);
    lfa::AuthStore store;
    if (std::filesystem::exists(store_path)) store = lfa::AuthStore::load(store_path);
    const lfa::VideoClip clip = load_cli_clip(clip_path, landmarks_path, model.config());
    store.enroll(client, phrase, clip, model, timestamp.value_or(-1));
    store.save(store_path);
    std::printf("enroll: %s/%s -> %s (%zu records)\n", client.c_str(), phrase.c_str(),
                store_path.c_str(), store.size());
    return 0;
}

int cmd_verify(const std::string& store_path, const std::string& client,
               const std::string& phrase, const std::string& clip_path,
               const std::string& landmarks_path, const std::string& checkpoint,
               double threshold) {
    const lfa::SlowFastModel model = lfa::load_model(checkpoint);
    const lfa::AuthStore store = lfa::AuthStore::load(store_path);
    const lfa::VideoClip clip = load_cli_clip(clip_path, landmarks_path, model.config());
    const lfa::AuthDecision d = store.authenticate(client, phrase, clip, model, threshold);
    nlohmann::json j;
    j["accepted"] = d.accepted;
    j["similarity"] = d.similarity;
    j["threshold"] = d.threshold;
    std::cout << j.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lip-motion biometric verification pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_path, manifest_path, checkpoint, split = "test";
    std::string store_path, client, phrase, clip_path, landmarks_path, roc_path;
    std::optional<uint64_t> seed;
    std::optional<int64_t> max_iterations, budget, timestamp;
    std::optional<int> threads;
    std::optional<double> step;
    double threshold = 0.0;

    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic lip-video corpus");
    gen->add_option("--config", config_path, "run configuration JSON");
    gen->add_option("--out", out_path, "corpus output directory")->required();
    gen->add_option("--seed", seed, "override corpus master seed");

    auto* train = app.add_subcommand("train", "train the embedding network");
    train->add_option("--config", config_path, "run configuration JSON");
    train->add_option("--corpus", manifest_path, "corpus manifest.json")->required();
    train->add_option("--out", out_path, "training run directory")->required();
    train->add_option("--max-iterations", max_iterations, "override iteration cap");
    train->add_option("--threads", threads, "worker threads (0 = auto)");
    train->add_option("--seed", seed, "override training seed");

    auto* eval = app.add_subcommand("eval", "verification metrics on a held-out split");
    eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    eval->add_option("--corpus", manifest_path, "corpus manifest.json")->required();
    eval->add_option("--split", split, "val or test (default test)");
    eval->add_option("--out", out_path, "report JSON path")->required();
    eval->add_option("--roc", roc_path, "ROC CSV path (default <out>.roc.csv)");
    eval->add_option("--budget", budget, "pair budget");
    eval->add_option("--step", step, "threshold sweep step");
    eval->add_option("--seed", seed, "pair sampling seed");

    auto* enroll = app.add_subcommand("enroll", "store a pass-phrase credential");
    enroll->add_option("--store", store_path, "store file")->required();
    enroll->add_option("--client", client, "client id")->required();
    enroll->add_option("--phrase", phrase, "phrase id")->required();
    enroll->add_option("--clip", clip_path, "clip file")->required();
    enroll->add_option("--landmarks", landmarks_path, "landmark csv for raw clips");
    enroll->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    enroll->add_option("--timestamp", timestamp, "enrollment time (unix seconds)");

    auto* verify = app.add_subcommand("verify", "authenticate a clip against the store");
    verify->add_option("--store", store_path, "store file")->required();
    verify->add_option("--client", client, "client id")->required();
    verify->add_option("--phrase", phrase, "phrase id")->required();
    verify->add_option("--clip", clip_path, "clip file")->required();
    verify->add_option("--landmarks", landmarks_path, "landmark csv for raw clips");
    verify->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    verify->add_option("--threshold", threshold, "accept threshold")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_corpus(config_path, out_path, seed);
        if (train->parsed()) {
            return cmd_train(config_path, manifest_path, out_path, max_iterations, threads,
                             seed);
        }
        if (eval->parsed()) {
            return cmd_eval(checkpoint, manifest_path, split, out_path, roc_path, budget, step,
                            seed);
        }
        if (enroll->parsed()) {
            return cmd_enroll(store_path, client, phrase, clip_path, landmarks_path,
                              checkpoint, timestamp);
        }
        if (verify->parsed()) {
            return cmd_verify(store_path, client, phrase, clip_path, landmarks_path,
                              checkpoint, threshold);
        }
    } catch (const lfa::NonFiniteLossError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNonFinite;
    } catch (const lfa::ProtocolError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitProtocol;
    } catch (const lfa::NotEnrolledError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNotEnrolled;
    } catch (const lfa::ConflictError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConflict;
    } catch (const lfa::ModelMismatchError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitModelMismatch;
    } catch (const lfa::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const lfa::UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const lfa::DimensionError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const lfa::FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const lfa::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
