#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lfa/preprocess.hpp"

namespace lfa {

struct ClipId {
    int client = 0;
    int phrase = 0;
    int emotion = 0;
    auto operator<=>(const ClipId&) const = default;
};

struct ClipEntry {
    ClipId id;
    std::string clip_path;       // relative to the manifest directory
    std::string landmarks_path;  // relative to the manifest directory
};

// Corpus description: one entry per (client, phrase, emotion) plus the
// open-set client split. Saved as manifest.json in the corpus directory.
struct CorpusManifest {
    int n_clients = 0;
    int n_phrases = 0;
    int n_emotions = 0;
    int frames_per_video = 0;
    int frame_height = 0;
    int frame_width = 0;
    uint64_t master_seed = 0;
    std::vector<int> train_clients, val_clients, test_clients;
    std::vector<ClipEntry> entries;

    const std::vector<int>& split_clients(const std::string& split) const;
    const ClipEntry& entry(const ClipId& id) const;
    bool splits_disjoint() const;

    std::string to_json_text() const;
    static CorpusManifest from_json_text(const std::string& text);
};

void save_manifest(const std::filesystem::path& path, const CorpusManifest& m);
CorpusManifest load_manifest(const std::filesystem::path& path);

// Loads raw clips + landmarks from a corpus and serves preprocessed,
// network-ready clips, cached per ClipId. Read paths resolve against the
// directory containing the manifest. get() fills the cache and is not
// thread-safe on a miss; warm the needed ids first, after which concurrent
// reads are fine.
class ClipStore {
public:
    ClipStore(std::filesystem::path corpus_dir, CorpusManifest manifest, PreprocessConfig cfg);

    const VideoClip& get(const ClipId& id) const;
    const CorpusManifest& manifest() const { return manifest_; }
    const PreprocessConfig& preprocess_config() const { return cfg_; }

    // Preprocess every clip of the given split up front.
    void warm_split(const std::string& split) const;

private:
    std::filesystem::path dir_;
    CorpusManifest manifest_;
    PreprocessConfig cfg_;
    mutable std::map<ClipId, VideoClip> cache_;
};

}  // namespace lfa
