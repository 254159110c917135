#ifndef FSWAP_MASKS_HPP
#define FSWAP_MASKS_HPP

#include <Eigen/Dense>
#include <array>
#include <utility>
#include <vector>

#include "fswap/common.hpp"
#include "fswap/tensor.hpp"

namespace fswap {

// 17 face-parsing categories. Left/right are from the viewer's side.
enum MaskCategory : int {
    kBackground = 0,
    kSkin,
    kLeftBrow,
    kRightBrow,
    kLeftEye,
    kRightEye,
    kGlasses,
    kLeftEar,
    kRightEar,
    kNose,
    kMouth,
    kUpperLip,
    kLowerLip,
    kNeck,
    kCloth,
    kHair,
    kHat,
};

inline constexpr int kNumMaskCategories = 17;

const std::array<const char*, kNumMaskCategories>& mask_category_names();

struct MaskLabelMap {
    Eigen::ArrayXXi labels;  // (h, w), values in [0, 17)

    int h() const { return static_cast<int>(labels.rows()); }
    int w() const { return static_cast<int>(labels.cols()); }
    void validate(const std::string& context = "") const;
};

enum class MaskRole { none, target, source, reference };

struct BinaryMask {
    Eigen::ArrayXXd m;  // (h, w), values in {0, 1}
    MaskRole role = MaskRole::none;

    int h() const { return static_cast<int>(m.rows()); }
    int w() const { return static_cast<int>(m.cols()); }
    double area() const { return m.sum(); }
    bool is_binary() const { return ((m == 0.0) || (m == 1.0)).all(); }
    BinaryMask complement() const { return BinaryMask{1.0 - m, role}; }
};

const std::vector<int>& all_mask_categories();

// Union of the given categories: pixel is 1 iff its label is in the set.
BinaryMask category_mask(const MaskLabelMap& labels, const std::vector<int>& categories);

// Draws N_m ~ U[lo, hi] distinct categories from `pool` and returns their
// union mask plus the chosen categories; the same categories define both
// m_ref and m_tar for a training example.
std::pair<BinaryMask, std::vector<int>> select_shuffled_mask(const MaskLabelMap& labels, Rng& rng,
                                                             std::pair<int, int> n_range,
                                                             const std::vector<int>& pool = all_mask_categories());
// Face preset: everything except background, hair, hat and clothing.
const std::vector<int>& face_preset_categories();
// Head preset: face preset plus hair and hat.
const std::vector<int>& head_preset_categories();

// Mask <-> tensor helpers.
Tensor mask_to_tensor(const BinaryMask& m);                          // (1, h, w)
Tensor apply_mask(const Tensor& image, const BinaryMask& m);         // channelwise multiply
Tensor downsample_mask_area(const BinaryMask& m, int lh, int lw);    // (1, lh, lw), values in [0,1]

}  // namespace fswap

#endif
