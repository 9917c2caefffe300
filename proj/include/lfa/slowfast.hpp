#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "lfa/preprocess.hpp"
#include "lfa/tensor.hpp"

namespace lfa {

struct StageSpec {
    int64_t slow_channels = 16;
    std::array<int64_t, 3> kernel{3, 3, 3};
    int64_t spatial_stride = 2;
};

struct SlowFastConfig {
    int64_t alpha = 8;    // temporal stride ratio, slow vs fast
    double beta = 0.125;  // channel ratio, fast vs slow, < 1
    int64_t clip_length = 32;
    std::vector<StageSpec> stages{{16, {3, 3, 3}, 2}, {32, {3, 3, 3}, 2}, {64, {3, 3, 3}, 2}};
    int64_t embed_dim = 64;
    int64_t input_height = 18;
    int64_t input_width = 30;
    int64_t input_channels = 3;
    int64_t lateral_channel_multiplier = 2;  // k: lateral output channels = k * fast channels

    int64_t fast_channels(size_t stage) const;
    void validate() const;  // throws ConfigError

    std::string to_json_text() const;
    static SlowFastConfig from_json_text(const std::string& text);
};

// Embedding network output; always unit L2 norm.
struct Embedding {
    std::vector<float> values;
};

double cosine_similarity(const Embedding& a, const Embedding& b);

class SlowFastModel {
public:
    SlowFastModel() = default;
    SlowFastModel(SlowFastConfig cfg, std::vector<Parameter> params);

    const SlowFastConfig& config() const { return cfg_; }
    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }

    const Tensor& param(const std::string& name) const;
    Tensor& param(const std::string& name);

    // Value copy: fresh parameter buffers, shared nothing.
    SlowFastModel clone() const;

private:
    SlowFastConfig cfg_;
    std::vector<Parameter> params_;
    std::unordered_map<std::string, size_t> index_;
};

// Deterministic build from seed: uniform +-sqrt(6/(fan_in+fan_out)) conv and
// linear weights, affine scale 1 / shift 0, then a forward dry-run at the
// configured shapes.
SlowFastModel build(const SlowFastConfig& cfg, uint64_t seed);

// Optional activation capture for structure checks.
struct ForwardCapture {
    std::vector<Tensor> fast_stage_out, slow_stage_out;
    Tensor fast_pooled, slow_pooled;
};

// Time-compresses fast features with a strided temporal conv and channel-
// concatenates them onto the slow stream. Requires Tf == alpha * Ts and
// equal spatial dims.
Tensor lateral_fuse(const Tensor& fast_feat, const Tensor& slow_feat,
                    const Tensor& lateral_kernel, int64_t alpha, Tape* tape = nullptr);

// Full forward pass on a [T,H,W,C] clip tensor; returns the unit-norm
// embedding as a Tensor (differentiable when tape is given).
Tensor embed_tensor(const SlowFastModel& model, const Tensor& clip, Tape* tape = nullptr,
                    ForwardCapture* capture = nullptr);

Embedding embed(const SlowFastModel& model, const VideoClip& clip);

int64_t param_count(const SlowFastModel& model);

// Checkpoint (LFA1 format) + config JSON at <path>.json.
void save_model(const std::filesystem::path& path, const SlowFastModel& model);
SlowFastModel load_model(const std::filesystem::path& path);

std::array<uint8_t, 32> fingerprint(const SlowFastModel& model);

}  // namespace lfa
