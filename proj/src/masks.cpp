#include "fswap/masks.hpp"

#include <algorithm>

namespace fswap {

const std::array<const char*, kNumMaskCategories>& mask_category_names() {
    static const std::array<const char*, kNumMaskCategories> names = {
        "background", "skin",  "left_brow", "right_brow", "left_eye", "right_eye", "glasses", "left_ear",
        "right_ear",  "nose",  "mouth",     "upper_lip",  "lower_lip", "neck",     "cloth",   "hair",
        "hat"};
    return names;
}

void MaskLabelMap::validate(const std::string& context) const {
    for (Eigen::Index y = 0; y < labels.rows(); ++y)
        for (Eigen::Index x = 0; x < labels.cols(); ++x) {
            int v = labels(y, x);
            if (v < 0 || v >= kNumMaskCategories)
                throw SchemaError("unknown label " + std::to_string(v) + " at (" + std::to_string(y) + "," +
                                  std::to_string(x) + ")" + (context.empty() ? "" : " in " + context));
        }
}

BinaryMask category_mask(const MaskLabelMap& labels, const std::vector<int>& categories) {
    std::array<bool, kNumMaskCategories> in_set{};
    for (int c : categories) {
        if (c < 0 || c >= kNumMaskCategories) throw SchemaError("category_mask: unknown category " + std::to_string(c));
        in_set[c] = true;
    }
    BinaryMask out;
    out.m = Eigen::ArrayXXd::Zero(labels.labels.rows(), labels.labels.cols());
    for (Eigen::Index y = 0; y < labels.labels.rows(); ++y)
        for (Eigen::Index x = 0; x < labels.labels.cols(); ++x) {
            int v = labels.labels(y, x);
            if (v < 0 || v >= kNumMaskCategories)
                throw SchemaError("category_mask: unknown label value " + std::to_string(v));
            if (in_set[v]) out.m(y, x) = 1.0;
        }
    return out;
}

std::pair<BinaryMask, std::vector<int>> select_shuffled_mask(const MaskLabelMap& labels, Rng& rng,
                                                             std::pair<int, int> n_range,
                                                             const std::vector<int>& pool) {
    auto [lo, hi] = n_range;
    if (lo < 1 || lo > hi || hi > static_cast<int>(pool.size()))
        throw RangeError("select_shuffled_mask: invalid n_range [" + std::to_string(lo) + "," + std::to_string(hi) +
                         "] for pool of " + std::to_string(pool.size()));
    int n = rng.uniform_int(lo, hi);
    std::vector<int> cats = pool;
    for (int i = 0; i < n; ++i) {  // partial Fisher-Yates
        int j = rng.uniform_int(i, static_cast<int>(cats.size()) - 1);
        std::swap(cats[i], cats[j]);
    }
    cats.resize(n);
    std::sort(cats.begin(), cats.end());
    return {category_mask(labels, cats), cats};
}

const std::vector<int>& all_mask_categories() {
    static const std::vector<int> v = [] {
        std::vector<int> r(kNumMaskCategories);
        for (int i = 0; i < kNumMaskCategories; ++i) r[i] = i;
        return r;
    }();
    return v;
}

const std::vector<int>& face_preset_categories() {
    static const std::vector<int> v = {kSkin,     kLeftBrow, kRightBrow, kLeftEye, kRightEye, kGlasses, kLeftEar,
                                       kRightEar, kNose,     kMouth,     kUpperLip, kLowerLip, kNeck};
    return v;
}

const std::vector<int>& head_preset_categories() {
    static const std::vector<int> v = [] {
        std::vector<int> r = face_preset_categories();
        r.push_back(kHair);
        r.push_back(kHat);
        std::sort(r.begin(), r.end());
        return r;
    }();
    return v;
}

Tensor mask_to_tensor(const BinaryMask& m) {
    Tensor t(1, m.h(), m.w());
    for (int y = 0; y < m.h(); ++y)
        for (int x = 0; x < m.w(); ++x) t.at(0, y, x) = m.m(y, x);
    return t;
}

Tensor apply_mask(const Tensor& image, const BinaryMask& m) {
    if (image.h() != m.h() || image.w() != m.w())
        throw ShapeError("apply_mask: image " + image.shape().str() + " vs mask " + std::to_string(m.h()) + "x" +
                         std::to_string(m.w()));
    Tensor out = image;
    for (int c = 0; c < image.c(); ++c)
        for (int y = 0; y < m.h(); ++y)
            for (int x = 0; x < m.w(); ++x) out.at(c, y, x) *= m.m(y, x);
    return out;
}

Tensor downsample_mask_area(const BinaryMask& m, int lh, int lw) {
    if (lh < 1 || lw < 1 || m.h() % lh || m.w() % lw)
        throw ShapeError("downsample_mask_area: " + std::to_string(m.h()) + "x" + std::to_string(m.w()) + " -> " +
                         std::to_string(lh) + "x" + std::to_string(lw));
    int by = m.h() / lh, bx = m.w() / lw;
    Tensor out(1, lh, lw);
    for (int y = 0; y < lh; ++y)
        for (int x = 0; x < lw; ++x) {
            double acc = 0.0;
            for (int yy = 0; yy < by; ++yy)
                for (int xx = 0; xx < bx; ++xx) acc += m.m(y * by + yy, x * bx + xx);
            out.at(0, y, x) = acc / (by * bx);
        }
    return out;
}

}  // namespace fswap
