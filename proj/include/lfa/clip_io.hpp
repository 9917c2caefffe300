#pragma once

#include <filesystem>
#include <vector>

#include "lfa/preprocess.hpp"
#include "lfa/tensor.hpp"

namespace lfa {

// Clip container: magic "CLP1", dims T,H,W,C as u32 little-endian, then
// f32 little-endian pixels. Holds both raw rendered frame blocks and
// preprocessed network inputs.
void write_clip_file(const std::filesystem::path& path, const Tensor& frames);
Tensor read_clip_file(const std::filesystem::path& path);

std::vector<Image> frames_from_tensor(const Tensor& t);
Tensor tensor_from_frames(const std::vector<Image>& frames);

// Landmark stream: one text line per frame with 48 comma-separated numbers
// (x1,y1,...,x24,y24).
void write_landmarks_csv(const std::filesystem::path& path,
                         const std::vector<LandmarkFrame>& frames);
std::vector<LandmarkFrame> read_landmarks_csv(const std::filesystem::path& path);

}  // namespace lfa
