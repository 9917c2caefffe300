#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lfa/preprocess.hpp"
#include "lfa/slowfast.hpp"

namespace lfa {

struct EnrollmentRecord {
    std::string client_id;
    std::string phrase_id;
    Embedding embedding;  // unit norm
    int64_t enrolled_at = 0;  // unix seconds
    std::array<uint8_t, 32> model_fingerprint{};
};

struct AuthDecision {
    bool accepted = false;
    double similarity = 0.0;
    double threshold = 0.0;
};

// Enrollment database keyed by (client, phrase): a record is a pass-phrase
// credential. All records within a store must come from the same model
// checkpoint, tracked by fingerprint.
class AuthStore {
public:
    size_t size() const { return records_.size(); }
    bool contains(const std::string& client_id, const std::string& phrase_id) const;
    const EnrollmentRecord& record(const std::string& client_id,
                                   const std::string& phrase_id) const;
    const std::map<std::pair<std::string, std::string>, EnrollmentRecord>& records() const {
        return records_;
    }

    // Embeds the (preprocessed) clip and persists it with the model's
    // fingerprint. Throws ConflictError on a duplicate key and
    // ModelMismatchError if the store already holds records from a
    // different model. enrolled_at < 0 means "now"; passing an explicit
    // timestamp keeps rerun output bit-identical.
    const EnrollmentRecord& enroll(const std::string& client_id, const std::string& phrase_id,
                                   const VideoClip& clip, const SlowFastModel& model,
                                   int64_t enrolled_at = -1);

    // Fresh embedding vs. stored embedding; accept iff similarity >= threshold.
    AuthDecision authenticate(const std::string& client_id, const std::string& phrase_id,
                              const VideoClip& clip, const SlowFastModel& model,
                              double threshold) const;

    void save(const std::filesystem::path& path) const;
    static AuthStore load(const std::filesystem::path& path);

private:
    std::map<std::pair<std::string, std::string>, EnrollmentRecord> records_;
};

}  // namespace lfa
