#ifndef FSWAP_TOYDATA_HPP
#define FSWAP_TOYDATA_HPP

#include <optional>
#include <string>
#include <vector>

#include "fswap/landmarks.hpp"
#include "fswap/masks.hpp"
#include "fswap/tensor.hpp"

namespace fswap {

// Factor specification for one rendered face. The renderer is a deterministic
// function of this struct: identity controls shape and palette, the remaining
// factors are per-image.
struct ToyFactorSpec {
    int identity = 0;
    double pose_deg = 0.0;     // [-25, 25], eye-line tilt
    double expression = 0.0;   // [-1, 1], mouth curvature
    double lighting = 1.0;     // [0.85, 1.15], global gain
    std::uint64_t instance_seed = 0;  // background, clothing, skin tint, freckles
    std::uint64_t style_seed = 0;     // dataset-level palette seed
};

struct ToyRender {
    Tensor image;  // (3, size, size) in [0,1]
    MaskLabelMap labels;
    Landmarks landmarks;
};

ToyRender render_toy_face(const ToyFactorSpec& spec, int size);

inline constexpr double kToyPoseRangeDeg = 25.0;
inline constexpr double kToyLightingMin = 0.85;
inline constexpr double kToyLightingMax = 1.15;

// Inverse-renderer oracles: estimate factors back from an image. They work on
// clean renders to tight tolerance and degrade gracefully on generated images
// (returning nullopt when the cue pixels are missing).
std::optional<double> estimate_pose_deg(const Tensor& image);
std::optional<double> estimate_expression(const Tensor& image);

struct ToyItem {
    int index = 0;
    std::string image_path, labels_path, landmarks_path;
    int identity = 0;
    double pose_deg = 0.0, expression = 0.0, lighting = 1.0;
    std::uint64_t instance_seed = 0;
    std::string split;  // "train" | "val"
    std::uint64_t checksum_image = 0, checksum_labels = 0, checksum_landmarks = 0;
};

class Dataset {
public:
    std::string root;
    int image_size = 0;
    std::uint64_t seed = 0;
    std::vector<ToyItem> items;

    const Tensor& image(int i) const { return images_.at(i); }
    const MaskLabelMap& labels(int i) const { return labels_.at(i); }
    const Landmarks& landmarks(int i) const { return landmarks_.at(i); }
    int size() const { return static_cast<int>(items.size()); }
    std::vector<int> split_indices(const std::string& split) const;

    // populated by load_dataset
    std::vector<Tensor> images_;
    std::vector<MaskLabelMap> labels_;
    std::vector<Landmarks> landmarks_;
};

// Writes images/, labels/, landmarks/ and manifest.jsonl under out_dir, then
// reloads it through the validating loader.
Dataset generate_toy_dataset(int identities, int per_identity, int size, std::uint64_t seed,
                             const std::string& out_dir);
Dataset load_dataset(const std::string& dir);

}  // namespace fswap

#endif
