#include "lfa/slowfast.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>

#include "lfa/checkpoint.hpp"
#include "lfa/errors.hpp"
#include "lfa/io_util.hpp"
#include "lfa/rng.hpp"

namespace lfa {

using nlohmann::json;

int64_t SlowFastConfig::fast_channels(size_t stage) const {
    return std::llround(beta * static_cast<double>(stages.at(stage).slow_channels));
}

void SlowFastConfig::validate() const {
    if (alpha < 2) throw ConfigError("slowfast: alpha must be >= 2");
    if (beta <= 0.0 || beta >= 1.0) throw ConfigError("slowfast: beta must be in (0, 1)");
    if (clip_length < alpha || clip_length % alpha != 0) {
        std::ostringstream os;
        os << "slowfast: clip_length " << clip_length << " must be divisible by alpha " << alpha;
        throw ConfigError(os.str());
    }
    if (stages.empty()) throw ConfigError("slowfast: at least one stage required");
    if (embed_dim < 1) throw ConfigError("slowfast: embed_dim must be >= 1");
    if (input_height < 1 || input_width < 1 || input_channels < 1) {
        throw ConfigError("slowfast: invalid input dims");
    }
    if (lateral_channel_multiplier < 1) {
        throw ConfigError("slowfast: lateral channel multiplier must be >= 1");
    }
    int64_t h = input_height, w = input_width;
    for (size_t i = 0; i < stages.size(); ++i) {
        const StageSpec& s = stages[i];
        if (s.slow_channels < 1) throw ConfigError("slowfast: slow_channels must be >= 1");
        if (fast_channels(i) < 1) {
            std::ostringstream os;
            os << "slowfast: stage " << i + 1 << " fast channels round(beta*"
               << s.slow_channels << ") < 1";
            throw ConfigError(os.str());
        }
        for (int64_t k : s.kernel) {
            if (k < 1 || k % 2 == 0) {
                throw ConfigError("slowfast: kernel sizes must be odd and >= 1");
            }
        }
        if (s.spatial_stride < 1) throw ConfigError("slowfast: spatial stride must be >= 1");
        if (h < s.kernel[1] || w < s.kernel[2]) {
            std::ostringstream os;
            os << "slowfast: stage " << i + 1 << " input " << h << "x" << w
               << " has collapsed below its " << s.kernel[1] << "x" << s.kernel[2] << " kernel";
            throw ConfigError(os.str());
        }
        // Same-padding conv: X' = floor((X + 2*(k-1)/2 - k)/stride) + 1 = floor((X-1)/stride) + 1.
        h = (h - 1) / s.spatial_stride + 1;
        w = (w - 1) / s.spatial_stride + 1;
    }
}

std::string SlowFastConfig::to_json_text() const {
    json j;
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["clip_length"] = clip_length;
    j["embed_dim"] = embed_dim;
    j["input"] = {{"height", input_height}, {"width", input_width}, {"channels", input_channels}};
    j["lateral_channel_multiplier"] = lateral_channel_multiplier;
    json stages_j = json::array();
    for (const StageSpec& s : stages) {
        stages_j.push_back({{"slow_channels", s.slow_channels},
                            {"kernel", {s.kernel[0], s.kernel[1], s.kernel[2]}},
                            {"spatial_stride", s.spatial_stride}});
    }
    j["stages"] = std::move(stages_j);
    return j.dump(2) + "\n";
}

SlowFastConfig SlowFastConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("model config parse error: ") + e.what());
    }
    try {
        SlowFastConfig cfg;
        cfg.alpha = j.at("alpha").get<int64_t>();
        cfg.beta = j.at("beta").get<double>();
        cfg.clip_length = j.at("clip_length").get<int64_t>();
        cfg.embed_dim = j.at("embed_dim").get<int64_t>();
        cfg.input_height = j.at("input").at("height").get<int64_t>();
        cfg.input_width = j.at("input").at("width").get<int64_t>();
        cfg.input_channels = j.at("input").at("channels").get<int64_t>();
        cfg.lateral_channel_multiplier = j.at("lateral_channel_multiplier").get<int64_t>();
        cfg.stages.clear();
        for (const json& s : j.at("stages")) {
            StageSpec spec;
            spec.slow_channels = s.at("slow_channels").get<int64_t>();
            const auto k = s.at("kernel").get<std::vector<int64_t>>();
            if (k.size() != 3) throw FormatError("model config: kernel must have 3 entries");
            spec.kernel = {k[0], k[1], k[2]};
            spec.spatial_stride = s.at("spatial_stride").get<int64_t>();
            cfg.stages.push_back(spec);
        }
        return cfg;
    } catch (const json::exception& e) {
        throw FormatError(std::string("model config field error: ") + e.what());
    }
}

SlowFastModel::SlowFastModel(SlowFastConfig cfg, std::vector<Parameter> params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
    for (size_t i = 0; i < params_.size(); ++i) {
        if (!index_.emplace(params_[i].name, i).second) {
            throw UsageError("duplicate parameter name: " + params_[i].name);
        }
    }
}

const Tensor& SlowFastModel::param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("no parameter named '" + name + "'");
    return params_[it->second].tensor;
}

Tensor& SlowFastModel::param(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("no parameter named '" + name + "'");
    return params_[it->second].tensor;
}

SlowFastModel SlowFastModel::clone() const {
    std::vector<Parameter> copy;
    copy.reserve(params_.size());
    for (const Parameter& p : params_) {
        copy.push_back({p.name, p.tensor.clone()});
    }
    return SlowFastModel(cfg_, std::move(copy));
}

namespace {

Tensor glorot_uniform(std::vector<int64_t> shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
    Tensor t(std::move(shape), true);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : t.mutable_data()) v = rng.uniform(-bound, bound);
    return t;
}

int64_t kernel_volume(const StageSpec& s) { return s.kernel[0] * s.kernel[1] * s.kernel[2]; }

}  // namespace

SlowFastModel build(const SlowFastConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    std::vector<Parameter> params;

    const auto add_stage = [&](const std::string& path, size_t i, int64_t cin, int64_t cout) {
        const StageSpec& s = cfg.stages[i];
        const std::string prefix = path + ".stage" + std::to_string(i + 1);
        params.push_back({prefix + ".conv.weight",
                          glorot_uniform({s.kernel[0], s.kernel[1], s.kernel[2], cin, cout},
                                         kernel_volume(s) * cin, kernel_volume(s) * cout, rng)});
        params.push_back({prefix + ".affine.scale", Tensor::full({cout}, 1.0, true)});
        params.push_back({prefix + ".affine.shift", Tensor({cout}, true)});
    };

    // Fast pathway.
    int64_t cin = cfg.input_channels;
    for (size_t i = 0; i < cfg.stages.size(); ++i) {
        add_stage("fast", i, cin, cfg.fast_channels(i));
        cin = cfg.fast_channels(i);
    }
    // Slow pathway; from stage 2 on, the input carries the fused lateral channels.
    cin = cfg.input_channels;
    for (size_t i = 0; i < cfg.stages.size(); ++i) {
        add_stage("slow", i, cin, cfg.stages[i].slow_channels);
        cin = cfg.stages[i].slow_channels +
              cfg.lateral_channel_multiplier * cfg.fast_channels(i);
    }
    // Lateral transforms feed the next slow stage; none after the last stage.
    for (size_t i = 0; i + 1 < cfg.stages.size(); ++i) {
        const int64_t cf = cfg.fast_channels(i);
        const int64_t cl = cfg.lateral_channel_multiplier * cf;
        params.push_back({"lateral.stage" + std::to_string(i + 1) + ".conv.weight",
                          glorot_uniform({cfg.alpha, 1, 1, cf, cl}, cfg.alpha * cf,
                                         cfg.alpha * cl, rng)});
    }
    // Projection head over the concatenated pooled pathway outputs.
    const int64_t head_in =
        cfg.stages.back().slow_channels + cfg.fast_channels(cfg.stages.size() - 1);
    params.push_back({"head.linear.weight",
                      glorot_uniform({head_in, cfg.embed_dim}, head_in, cfg.embed_dim, rng)});
    params.push_back({"head.linear.bias", Tensor({cfg.embed_dim}, true)});

    SlowFastModel model(cfg, std::move(params));

    // Dry run at the configured shapes.
    Tensor zero_clip({cfg.clip_length, cfg.input_height, cfg.input_width, cfg.input_channels});
    Tensor out = embed_tensor(model, zero_clip);
    if (out.size() != cfg.embed_dim || !out.all_finite()) {
        throw ConfigError("slowfast: dry-run forward produced an invalid embedding");
    }
    return model;
}

Tensor lateral_fuse(const Tensor& fast_feat, const Tensor& slow_feat,
                    const Tensor& lateral_kernel, int64_t alpha, Tape* tape) {
    if (fast_feat.shape().size() != 4 || slow_feat.shape().size() != 4) {
        throw DimensionError("lateral_fuse: features must be rank-4 [T,H,W,C]");
    }
    if (fast_feat.dim(0) != alpha * slow_feat.dim(0)) {
        std::ostringstream os;
        os << "lateral_fuse: temporal mismatch, fast T=" << fast_feat.dim(0)
           << " is not alpha*slow T=" << alpha << "*" << slow_feat.dim(0);
        throw DimensionError(os.str());
    }
    if (fast_feat.dim(1) != slow_feat.dim(1) || fast_feat.dim(2) != slow_feat.dim(2)) {
        throw DimensionError("lateral_fuse: spatial dims differ between pathways");
    }
    Tensor compressed = conv3d(fast_feat, lateral_kernel, {alpha, 1, 1}, {0, 0, 0}, tape);
    return concat_last(slow_feat, compressed, tape);
}

Tensor embed_tensor(const SlowFastModel& model, const Tensor& clip, Tape* tape,
                    ForwardCapture* capture) {
    const SlowFastConfig& cfg = model.config();
    const std::vector<int64_t> expect{cfg.clip_length, cfg.input_height, cfg.input_width,
                                      cfg.input_channels};
    if (clip.shape() != expect) {
        std::ostringstream os;
        os << "embed: clip shape [";
        for (size_t i = 0; i < clip.shape().size(); ++i) os << (i ? "," : "") << clip.shape()[i];
        os << "] does not match configured [" << cfg.clip_length << "," << cfg.input_height
           << "," << cfg.input_width << "," << cfg.input_channels << "]";
        throw DimensionError(os.str());
    }

    const auto stage_name = [](const char* path, size_t i, const char* leaf) {
        return std::string(path) + ".stage" + std::to_string(i + 1) + "." + leaf;
    };
    const auto run_stage = [&](const Tensor& x, const char* path, size_t i) {
        const StageSpec& s = cfg.stages[i];
        const Dims3 stride{1, s.spatial_stride, s.spatial_stride};
        const Dims3 pad{(s.kernel[0] - 1) / 2, (s.kernel[1] - 1) / 2, (s.kernel[2] - 1) / 2};
        Tensor y = conv3d(x, model.param(stage_name(path, i, "conv.weight")), stride, pad, tape);
        y = channel_affine(y, model.param(stage_name(path, i, "affine.scale")),
                           model.param(stage_name(path, i, "affine.shift")), tape);
        return relu(y, tape);
    };

    Tensor fast = clip;
    Tensor slow = temporal_stride(clip, cfg.alpha, tape);
    for (size_t i = 0; i < cfg.stages.size(); ++i) {
        fast = run_stage(fast, "fast", i);
        slow = run_stage(slow, "slow", i);
        if (capture) {
            capture->fast_stage_out.push_back(fast);
            capture->slow_stage_out.push_back(slow);
        }
        if (i + 1 < cfg.stages.size()) {
            slow = lateral_fuse(fast, slow,
                                model.param(stage_name("lateral", i, "conv.weight")), cfg.alpha,
                                tape);
        }
    }

    Tensor fast_pooled = global_avg_pool(fast, tape);
    Tensor slow_pooled = global_avg_pool(slow, tape);
    if (capture) {
        capture->fast_pooled = fast_pooled;
        capture->slow_pooled = slow_pooled;
    }
    Tensor head = concat_last(slow_pooled, fast_pooled, tape);
    Tensor projected =
        linear(head, model.param("head.linear.weight"), model.param("head.linear.bias"), tape);
    return l2_normalize(projected, tape);
}

Embedding embed(const SlowFastModel& model, const VideoClip& clip) {
    const Tensor out = embed_tensor(model, clip.frames);
    Embedding e;
    e.values.reserve(static_cast<size_t>(out.size()));
    for (double v : out.data()) e.values.push_back(static_cast<float>(v));
    return e;
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
    if (a.values.size() != b.values.size() || a.values.empty()) {
        throw DimensionError("cosine_similarity: embedding sizes differ or empty");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        dot += static_cast<double>(a.values[i]) * b.values[i];
        na += static_cast<double>(a.values[i]) * a.values[i];
        nb += static_cast<double>(b.values[i]) * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) throw UsageError("cosine_similarity: zero-norm embedding");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

int64_t param_count(const SlowFastModel& model) {
    int64_t n = 0;
    for (const Parameter& p : model.parameters()) n += p.tensor.size();
    return n;
}

void save_model(const std::filesystem::path& path, const SlowFastModel& model) {
    save_checkpoint(path, model.parameters());
    atomic_write(std::filesystem::path(path.string() + ".json"),
                 model.config().to_json_text());
}

SlowFastModel load_model(const std::filesystem::path& path) {
    std::vector<Parameter> params = load_checkpoint(path);
    const std::vector<uint8_t> cfg_bytes =
        read_file(std::filesystem::path(path.string() + ".json"));
    SlowFastConfig cfg =
        SlowFastConfig::from_json_text(std::string(cfg_bytes.begin(), cfg_bytes.end()));
    cfg.validate();
    return SlowFastModel(std::move(cfg), std::move(params));
}

std::array<uint8_t, 32> fingerprint(const SlowFastModel& model) {
    return model_fingerprint(model.parameters());
}

}  // namespace lfa
