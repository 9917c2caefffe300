#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lfa/authstore.hpp"
#include "lfa/eval.hpp"
#include "lfa/io_util.hpp"
#include "lfa/synthcorpus.hpp"
#include "lfa/triplet.hpp"
#include "test_util.hpp"

using namespace lfa;

namespace {

struct AuthSetup {
    test_util::TempDir dir{"auth"};
    CorpusManifest manifest;
    SlowFastConfig model_cfg;
    std::unique_ptr<ClipStore> clips;
    SlowFastModel model;

    AuthSetup() {
        CorpusConfig cfg;
        cfg.n_clients = 3;
        cfg.n_phrases = 2;
        cfg.n_emotions = 2;
        cfg.frames_per_video = 10;
        cfg.frame_height = 48;
        cfg.frame_width = 64;
        cfg.master_seed = 12;
        cfg.train_count = 1;
        cfg.val_count = 1;
        cfg.test_count = 1;
        manifest = gen_corpus(cfg, dir.path());

        model_cfg.alpha = 4;
        model_cfg.beta = 0.25;
        model_cfg.clip_length = 8;
        model_cfg.stages = {{4, {3, 3, 3}, 2}};
        model_cfg.embed_dim = 8;
        PreprocessConfig pc;
        pc.clip_length = 8;
        clips = std::make_unique<ClipStore>(dir.path(), manifest, pc);
        model = build(model_cfg, 77);
    }
};

}  // namespace

TEST_CASE("enroll, duplicate conflict, embedding identity") {
    AuthSetup s;
    AuthStore store;
    CHECK(store.size() == 0);

    const VideoClip& clip = s.clips->get({0, 0, 0});
    const EnrollmentRecord& rec = store.enroll("c0", "p0", clip, s.model);
    CHECK(store.size() == 1);
    CHECK(rec.client_id == "c0");

    CHECK_THROWS_AS(store.enroll("c0", "p0", clip, s.model), ConflictError);

    const Embedding direct = embed(s.model, clip);
    CHECK(rec.embedding.values == direct.values);

    double norm = 0.0;
    for (float v : rec.embedding.values) norm += static_cast<double>(v) * v;
    CHECK(std::fabs(std::sqrt(norm) - 1.0) < 1e-6);
}

TEST_CASE("authenticate: self-match, unknown key, threshold semantics") {
    AuthSetup s;
    AuthStore store;
    const VideoClip& clip = s.clips->get({0, 0, 0});
    store.enroll("c0", "p0", clip, s.model);

    const AuthDecision d = store.authenticate("c0", "p0", clip, s.model, 0.9);
    CHECK(d.similarity == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(d.accepted);
    CHECK(d.accepted == (d.similarity >= d.threshold));

    CHECK_THROWS_AS(store.authenticate("nobody", "p0", clip, s.model, 0.5),
                    NotEnrolledError);
    CHECK_THROWS_AS(store.authenticate("c0", "p9", clip, s.model, 0.5), NotEnrolledError);
    CHECK_THROWS_AS(store.authenticate("c0", "p0", clip, s.model, 1.5), UsageError);
}

TEST_CASE("decision monotonicity in the threshold") {
    AuthSetup s;
    AuthStore store;
    store.enroll("c0", "p0", s.clips->get({0, 0, 0}), s.model);
    const VideoClip& probe = s.clips->get({0, 0, 1});
    bool prev_accept = true;
    for (double t = -1.0; t <= 1.0; t += 0.05) {
        const AuthDecision d = store.authenticate("c0", "p0", probe, s.model, t);
        CHECK(d.accepted == (d.similarity >= t));
        if (!prev_accept) CHECK_FALSE(d.accepted);  // raising t never re-accepts
        prev_accept = d.accepted;
    }
}

TEST_CASE("model fingerprint guards both enroll and authenticate") {
    AuthSetup s;
    AuthStore store;
    store.enroll("c0", "p0", s.clips->get({0, 0, 0}), s.model);

    const SlowFastModel other = build(s.model_cfg, 99);
    CHECK_THROWS_AS(store.enroll("c1", "p0", s.clips->get({1, 0, 0}), other),
                    ModelMismatchError);
    CHECK_THROWS_AS(store.authenticate("c0", "p0", s.clips->get({0, 0, 0}), other, 0.5),
                    ModelMismatchError);
}

TEST_CASE("store round-trip is bit-exact") {
    AuthSetup s;
    AuthStore store;
    store.enroll("c0", "p0", s.clips->get({0, 0, 0}), s.model);
    store.enroll("c0", "p1", s.clips->get({0, 1, 0}), s.model);
    store.enroll("c1", "p0", s.clips->get({1, 0, 0}), s.model);

    const auto path = s.dir.path() / "store.bin";
    store.save(path);
    const auto bytes1 = read_file(path);

    const AuthStore loaded = AuthStore::load(path);
    CHECK(loaded.size() == 3);
    loaded.save(path);
    CHECK(read_file(path) == bytes1);

    for (const auto& [key, rec] : store.records()) {
        const EnrollmentRecord& back = loaded.record(key.first, key.second);
        CHECK(back.embedding.values == rec.embedding.values);
        CHECK(back.enrolled_at == rec.enrolled_at);
        CHECK(back.model_fingerprint == rec.model_fingerprint);
    }
}

TEST_CASE("empty store round-trip and corrupt files") {
    test_util::TempDir dir("store_edge");
    AuthStore store;
    const auto path = dir.path() / "empty.bin";
    store.save(path);
    CHECK(AuthStore::load(path).size() == 0);

    atomic_write(dir.path() / "bad.bin", std::string("XXXX"));
    CHECK_THROWS_AS(AuthStore::load(dir.path() / "bad.bin"), FormatError);

    auto bytes = read_file(path);
    bytes.resize(bytes.size() - 2);
    AuthStore full;
    // build a one-record store, then truncate it
    {
        AuthSetup s;
        full.enroll("c", "p", s.clips->get({0, 0, 0}), s.model);
        full.save(dir.path() / "full.bin");
        auto fb = read_file(dir.path() / "full.bin");
        fb.resize(fb.size() - 5);
        atomic_write(dir.path() / "trunc.bin", fb);
        CHECK_THROWS_AS(AuthStore::load(dir.path() / "trunc.bin"), FormatError);
    }
}

TEST_CASE("auth decisions agree with eval far/frr on the same pairs") {
    AuthSetup s;
    // Pairs drawn from the test split; every anchor clip enrolled under a
    // distinct composite key so shared (client, phrase) anchors don't clash.
    TripletSampler sampler(s.manifest.test_clients, s.manifest.n_phrases,
                           s.manifest.n_emotions);
    Rng rng(55);
    const auto batch = sampler.sample_batch(8, rng);

    ScoreSet scores;
    AuthStore store;
    std::vector<AuthDecision> genuine_dec, imposter_dec;
    const double threshold = 0.2;
    int auto_key = 0;
    for (const TripletSpec& t : batch) {
        const Embedding a = embed(s.model, s.clips->get(t.anchor));
        const Embedding p = embed(s.model, s.clips->get(t.positive));
        const Embedding n = embed(s.model, s.clips->get(t.negative));
        scores.genuine.push_back(cosine_similarity(a, p));
        scores.imposter.push_back(cosine_similarity(a, n));

        const std::string key = "anchor_" + std::to_string(auto_key++);
        store.enroll(key, "p", s.clips->get(t.anchor), s.model);
        genuine_dec.push_back(
            store.authenticate(key, "p", s.clips->get(t.positive), s.model, threshold));
        imposter_dec.push_back(
            store.authenticate(key, "p", s.clips->get(t.negative), s.model, threshold));
    }

    const auto [far, frr] = far_frr(scores, threshold);
    int rejected_genuine = 0, accepted_imposter = 0;
    for (size_t i = 0; i < genuine_dec.size(); ++i) {
        CHECK(genuine_dec[i].similarity == scores.genuine[i]);
        CHECK(imposter_dec[i].similarity == scores.imposter[i]);
        if (!genuine_dec[i].accepted) ++rejected_genuine;
        if (imposter_dec[i].accepted) ++accepted_imposter;
    }
    CHECK(static_cast<double>(rejected_genuine) / genuine_dec.size() == frr);
    CHECK(static_cast<double>(accepted_imposter) / imposter_dec.size() == far);
}
