#include "lfa/authstore.hpp"

#include <cstring>
#include <ctime>

#include "lfa/errors.hpp"
#include "lfa/io_util.hpp"

namespace lfa {

namespace {
constexpr char kMagic[4] = {'L', 'F', 'S', '1'};
}

bool AuthStore::contains(const std::string& client_id, const std::string& phrase_id) const {
    return records_.count({client_id, phrase_id}) > 0;
}

const EnrollmentRecord& AuthStore::record(const std::string& client_id,
                                          const std::string& phrase_id) const {
    auto it = records_.find({client_id, phrase_id});
    if (it == records_.end()) {
        throw NotEnrolledError("no enrollment for client '" + client_id + "' phrase '" +
                               phrase_id + "'");
    }
    return it->second;
}

const EnrollmentRecord& AuthStore::enroll(const std::string& client_id,
                                          const std::string& phrase_id, const VideoClip& clip,
                                          const SlowFastModel& model, int64_t enrolled_at) {
    const auto key = std::make_pair(client_id, phrase_id);
    if (records_.count(key)) {
        throw ConflictError("client '" + client_id + "' already enrolled for phrase '" +
                            phrase_id + "'");
    }
    const std::array<uint8_t, 32> fp = fingerprint(model);
    if (!records_.empty() && records_.begin()->second.model_fingerprint != fp) {
        throw ModelMismatchError(
            "store holds embeddings from a different model checkpoint; enroll refused");
    }
    EnrollmentRecord rec;
    rec.client_id = client_id;
    rec.phrase_id = phrase_id;
    rec.embedding = embed(model, clip);
    rec.enrolled_at = enrolled_at < 0 ? static_cast<int64_t>(std::time(nullptr)) : enrolled_at;
    rec.model_fingerprint = fp;
    return records_.emplace(key, std::move(rec)).first->second;
}

AuthDecision AuthStore::authenticate(const std::string& client_id, const std::string& phrase_id,
                                     const VideoClip& clip, const SlowFastModel& model,
                                     double threshold) const {
    if (threshold < -1.0 || threshold > 1.0) {
        throw UsageError("authenticate: threshold must be in [-1, 1]");
    }
    const EnrollmentRecord& rec = record(client_id, phrase_id);
    if (rec.model_fingerprint != fingerprint(model)) {
        throw ModelMismatchError(
            "stored embedding for client '" + client_id +
            "' comes from a different model checkpoint; authentication refused");
    }
    const Embedding fresh = embed(model, clip);
    AuthDecision d;
    d.similarity = cosine_similarity(rec.embedding, fresh);
    d.threshold = threshold;
    d.accepted = d.similarity >= threshold;
    return d;
}

void AuthStore::save(const std::filesystem::path& path) const {
    ByteWriter w;
    w.raw(kMagic, 4);
    w.u64(records_.size());
    for (const auto& [key, rec] : records_) {
        w.str(rec.client_id);
        w.str(rec.phrase_id);
        w.i64(rec.enrolled_at);
        w.raw(rec.model_fingerprint.data(), rec.model_fingerprint.size());
        w.u32(static_cast<uint32_t>(rec.embedding.values.size()));
        for (float v : rec.embedding.values) w.f32(v);
    }
    atomic_write(path, w.bytes());
}

AuthStore AuthStore::load(const std::filesystem::path& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    ByteReader r(bytes);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("bad store magic in " + path.string());
    }
    AuthStore store;
    const uint64_t count = r.u64();
    for (uint64_t i = 0; i < count; ++i) {
        EnrollmentRecord rec;
        rec.client_id = r.str();
        rec.phrase_id = r.str();
        rec.enrolled_at = r.i64();
        r.raw(rec.model_fingerprint.data(), rec.model_fingerprint.size());
        const uint32_t dim = r.u32();
        if (static_cast<uint64_t>(dim) * 4 > r.remaining()) {
            throw FormatError("truncated store record in " + path.string());
        }
        rec.embedding.values.resize(dim);
        for (uint32_t d = 0; d < dim; ++d) rec.embedding.values[d] = r.f32();
        store.records_.emplace(std::make_pair(rec.client_id, rec.phrase_id), std::move(rec));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after store payload in " + path.string());
    return store;
}

}  // namespace lfa
