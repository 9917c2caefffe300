#include "lfa/run_config.hpp"

#include <json.hpp>

#include <sstream>

#include "lfa/errors.hpp"
#include "lfa/io_util.hpp"

namespace lfa {

using nlohmann::json;

void RunConfig::validate() const {
    corpus.validate();
    preprocess.validate();
    model.validate();
    train.validate();

    if (preprocess.clip_length != model.clip_length) {
        std::ostringstream os;
        os << "config: preprocess clip_length " << preprocess.clip_length
           << " != model clip_length " << model.clip_length;
        throw ConfigError(os.str());
    }
    if (preprocess.target_height != model.input_height ||
        preprocess.target_width != model.input_width) {
        std::ostringstream os;
        os << "config: preprocess target " << preprocess.target_width << "x"
           << preprocess.target_height << " does not match model input " << model.input_width
           << "x" << model.input_height;
        throw ConfigError(os.str());
    }
    if (model.input_channels != 3) {
        throw ConfigError("config: corpus clips carry 3 channels, model expects " +
                          std::to_string(model.input_channels));
    }
    if (eval.split != "val" && eval.split != "test") {
        throw ConfigError("config: eval split must be val or test");
    }
    if (eval.sweep_step <= 0.0) throw ConfigError("config: sweep_step must be > 0");
    if (eval.pair_budget < 0) throw ConfigError("config: pair_budget must be >= 0");
}

std::string RunConfig::to_json_text() const {
    json j;
    j["corpus"] = {{"n_clients", corpus.n_clients},
                   {"n_phrases", corpus.n_phrases},
                   {"n_emotions", corpus.n_emotions},
                   {"frames_per_video", corpus.frames_per_video},
                   {"frame_height", corpus.frame_height},
                   {"frame_width", corpus.frame_width},
                   {"master_seed", corpus.master_seed},
                   {"train_count", corpus.train_count},
                   {"val_count", corpus.val_count},
                   {"test_count", corpus.test_count}};
    j["preprocess"] = {{"target_aspect_ratio", preprocess.target_aspect_ratio},
                       {"target_width", preprocess.target_width},
                       {"target_height", preprocess.target_height},
                       {"clip_length", preprocess.clip_length}};
    j["model"] = json::parse(model.to_json_text());
    j["train"] = json::parse(train.to_json_text());
    j["eval"] = {{"split", eval.split},
                 {"pair_budget", eval.pair_budget},
                 {"sweep_step", eval.sweep_step},
                 {"seed", eval.seed}};
    return j.dump(2) + "\n";
}

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    RunConfig cfg;
    try {
        if (j.contains("corpus")) {
            const json& c = j["corpus"];
            maybe(c, "n_clients", cfg.corpus.n_clients);
            maybe(c, "n_phrases", cfg.corpus.n_phrases);
            maybe(c, "n_emotions", cfg.corpus.n_emotions);
            maybe(c, "frames_per_video", cfg.corpus.frames_per_video);
            maybe(c, "frame_height", cfg.corpus.frame_height);
            maybe(c, "frame_width", cfg.corpus.frame_width);
            maybe(c, "master_seed", cfg.corpus.master_seed);
            maybe(c, "train_count", cfg.corpus.train_count);
            maybe(c, "val_count", cfg.corpus.val_count);
            maybe(c, "test_count", cfg.corpus.test_count);
        }
        if (j.contains("preprocess")) {
            const json& p = j["preprocess"];
            maybe(p, "target_aspect_ratio", cfg.preprocess.target_aspect_ratio);
            maybe(p, "target_width", cfg.preprocess.target_width);
            maybe(p, "target_height", cfg.preprocess.target_height);
            maybe(p, "clip_length", cfg.preprocess.clip_length);
        }
        if (j.contains("model")) {
            const json& m = j["model"];
            maybe(m, "alpha", cfg.model.alpha);
            maybe(m, "beta", cfg.model.beta);
            maybe(m, "clip_length", cfg.model.clip_length);
            maybe(m, "embed_dim", cfg.model.embed_dim);
            maybe(m, "lateral_channel_multiplier", cfg.model.lateral_channel_multiplier);
            if (m.contains("input")) {
                maybe(m["input"], "height", cfg.model.input_height);
                maybe(m["input"], "width", cfg.model.input_width);
                maybe(m["input"], "channels", cfg.model.input_channels);
            }
            if (m.contains("stages")) {
                cfg.model.stages.clear();
                for (const json& s : m["stages"]) {
                    StageSpec spec;
                    maybe(s, "slow_channels", spec.slow_channels);
                    if (s.contains("kernel")) {
                        const auto k = s["kernel"].get<std::vector<int64_t>>();
                        if (k.size() != 3) {
                            throw ConfigError("config: stage kernel needs 3 entries");
                        }
                        spec.kernel = {k[0], k[1], k[2]};
                    }
                    maybe(s, "spatial_stride", spec.spatial_stride);
                    cfg.model.stages.push_back(spec);
                }
            }
        }
        if (j.contains("train")) {
            try {
                cfg.train = TrainConfig::from_json_text(j["train"].dump());
            } catch (const FormatError& e) {
                throw ConfigError(e.what());
            }
        }
        if (j.contains("eval")) {
            const json& e = j["eval"];
            maybe(e, "split", cfg.eval.split);
            maybe(e, "pair_budget", cfg.eval.pair_budget);
            maybe(e, "sweep_step", cfg.eval.sweep_step);
            maybe(e, "seed", cfg.eval.seed);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    return RunConfig::from_json_text(std::string(bytes.begin(), bytes.end()));
}

}  // namespace lfa
