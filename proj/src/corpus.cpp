#include "lfa/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>

#include "lfa/clip_io.hpp"
#include "lfa/errors.hpp"
#include "lfa/io_util.hpp"

namespace lfa {

using nlohmann::json;

const std::vector<int>& CorpusManifest::split_clients(const std::string& split) const {
    if (split == "train") return train_clients;
    if (split == "val") return val_clients;
    if (split == "test") return test_clients;
    throw UsageError("unknown split '" + split + "' (expected train/val/test)");
}

const ClipEntry& CorpusManifest::entry(const ClipId& id) const {
    for (const ClipEntry& e : entries) {
        if (e.id == id) return e;
    }
    throw UsageError("manifest has no entry for client " + std::to_string(id.client) +
                     " phrase " + std::to_string(id.phrase) + " emotion " +
                     std::to_string(id.emotion));
}

bool CorpusManifest::splits_disjoint() const {
    std::set<int> seen;
    for (const auto* split : {&train_clients, &val_clients, &test_clients}) {
        for (int c : *split) {
            if (!seen.insert(c).second) return false;
        }
    }
    return true;
}

std::string CorpusManifest::to_json_text() const {
    json j;
    j["n_clients"] = n_clients;
    j["n_phrases"] = n_phrases;
    j["n_emotions"] = n_emotions;
    j["frames_per_video"] = frames_per_video;
    j["frame_height"] = frame_height;
    j["frame_width"] = frame_width;
    j["master_seed"] = master_seed;
    j["splits"] = {{"train", train_clients}, {"val", val_clients}, {"test", test_clients}};
    json entries_j = json::array();
    for (const ClipEntry& e : entries) {
        entries_j.push_back({{"client", e.id.client},
                             {"phrase", e.id.phrase},
                             {"emotion", e.id.emotion},
                             {"clip", e.clip_path},
                             {"landmarks", e.landmarks_path}});
    }
    j["entries"] = std::move(entries_j);
    return j.dump(2) + "\n";
}

CorpusManifest CorpusManifest::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest parse error: ") + e.what());
    }
    try {
        CorpusManifest m;
        m.n_clients = j.at("n_clients").get<int>();
        m.n_phrases = j.at("n_phrases").get<int>();
        m.n_emotions = j.at("n_emotions").get<int>();
        m.frames_per_video = j.at("frames_per_video").get<int>();
        m.frame_height = j.at("frame_height").get<int>();
        m.frame_width = j.at("frame_width").get<int>();
        m.master_seed = j.at("master_seed").get<uint64_t>();
        m.train_clients = j.at("splits").at("train").get<std::vector<int>>();
        m.val_clients = j.at("splits").at("val").get<std::vector<int>>();
        m.test_clients = j.at("splits").at("test").get<std::vector<int>>();
        for (const json& e : j.at("entries")) {
            ClipEntry entry;
            entry.id.client = e.at("client").get<int>();
            entry.id.phrase = e.at("phrase").get<int>();
            entry.id.emotion = e.at("emotion").get<int>();
            entry.clip_path = e.at("clip").get<std::string>();
            entry.landmarks_path = e.at("landmarks").get<std::string>();
            m.entries.push_back(std::move(entry));
        }
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest field error: ") + e.what());
    }
}

void save_manifest(const std::filesystem::path& path, const CorpusManifest& m) {
    atomic_write(path, m.to_json_text());
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    return CorpusManifest::from_json_text(std::string(bytes.begin(), bytes.end()));
}

ClipStore::ClipStore(std::filesystem::path corpus_dir, CorpusManifest manifest,
                     PreprocessConfig cfg)
    : dir_(std::move(corpus_dir)), manifest_(std::move(manifest)), cfg_(cfg) {
    cfg_.validate();
}

const VideoClip& ClipStore::get(const ClipId& id) const {
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;

    const ClipEntry& e = manifest_.entry(id);
    const Tensor raw = read_clip_file(dir_ / e.clip_path);
    const std::vector<Image> frames = frames_from_tensor(raw);
    const std::vector<LandmarkFrame> landmarks = read_landmarks_csv(dir_ / e.landmarks_path);
    VideoClip clip =
        preprocess_clip(frames, landmarks, cfg_, id.client, id.phrase, id.emotion);
    return cache_.emplace(id, std::move(clip)).first->second;
}

void ClipStore::warm_split(const std::string& split) const {
    for (int c : manifest_.split_clients(split)) {
        for (int p = 0; p < manifest_.n_phrases; ++p) {
            for (int e = 0; e < manifest_.n_emotions; ++e) {
                get({c, p, e});
            }
        }
    }
}

}  // namespace lfa
