#pragma once

#include <filesystem>
#include <string>

#include "lfa/preprocess.hpp"
#include "lfa/slowfast.hpp"
#include "lfa/synthcorpus.hpp"
#include "lfa/triplet.hpp"

namespace lfa {

struct EvalSettings {
    std::string split = "test";
    int64_t pair_budget = 2000;
    double sweep_step = 0.001;
    uint64_t seed = 7;
};

// One configuration document for the whole pipeline. Every field has a
// desk-scale default; a config file only needs the values it overrides.
struct RunConfig {
    CorpusConfig corpus;
    PreprocessConfig preprocess;
    SlowFastConfig model;
    TrainConfig train;
    EvalSettings eval;

    // Per-section validation plus cross-field consistency (clip length
    // divisible by alpha, preprocess target equals model input, 3-channel
    // corpus).
    void validate() const;

    std::string to_json_text() const;
    static RunConfig from_json_text(const std::string& text);
};

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace lfa
