#ifndef FSWAP_INFERENCE_HPP
#define FSWAP_INFERENCE_HPP

#include <string>
#include <vector>

#include "fswap/training.hpp"

namespace fswap {

enum class MaskPreset { face, head, custom };

MaskPreset parse_mask_preset(const std::string& s, std::vector<int>* custom_out);
const std::vector<int>& preset_categories(MaskPreset preset, const std::vector<int>& custom);

struct SwapRequest {
    Tensor x_src, x_tar;
    MaskLabelMap labels_src, labels_tar;
    Landmarks lm_tar;
    MaskPreset preset = MaskPreset::face;
    std::vector<int> custom_categories;
    int n_steps = 50;
    std::uint64_t seed = 0;
};

// Full swap: masks from the preset, condition with the source as reference
// (no augmentation), inpaint context from the blanked target (no face-shape
// augmentation), DDIM from seeded noise, decode. No post-hoc blending or
// masked fusion at any step. Output clamped to [0,1].
Tensor swap(const Denoiser& model, const Codec& codec, const EncoderSuite& suite, const NoiseSchedule& sched,
            const SwapRequest& request);

inline Tensor swap(const ModelBundle& bundle, const SwapRequest& request) {
    return swap(*bundle.model, *bundle.codec, bundle.suite, bundle.sched, request);
}

// Mean absolute error outside the swap region: the testable surrogate for
// seamless blending without a merging step.
double background_mae(const Tensor& swapped, const Tensor& target, const BinaryMask& m_tar);

struct SwapManifestRow {
    std::string source, target, output;
    std::uint64_t seed = 0;
    int n_steps = 0;
    std::string status;  // "ok" or the error message
};

struct BatchResult {
    std::vector<SwapManifestRow> rows;
    std::vector<Tensor> images;  // empty tensor on failed items
    std::string manifest_path;
};

// Maps swap over requests; failures are recorded per row and the run
// continues. Outputs land in out_dir as swap_<i>.ppm plus manifest.jsonl.
BatchResult swap_batch(const ModelBundle& bundle, const std::vector<SwapRequest>& requests,
                       const std::vector<std::pair<std::string, std::string>>& names, const std::string& out_dir,
                       int workers = 1);

}  // namespace fswap

#endif
