#ifndef FSWAP_AUGMENT_HPP
#define FSWAP_AUGMENT_HPP

#include "fswap/masks.hpp"
#include "fswap/tensor.hpp"

namespace fswap {

struct TpsParams {
    int lattice = 4;                   // lattice x lattice control points over the mask extent
    double base_amplitude_frac = 0.05;  // of the mask bounding-box diagonal, at s = 1
};

// Face-shape augmentation: TPS-warp the mask by backward mapping with
// nearest-neighbor sampling (edge-clamped), then rebinarize. s = 0 is the
// identity deformation.
BinaryMask tps_deform_mask(const BinaryMask& mask, double s, Rng& rng, const TpsParams& params = {});

struct FaceShapeAugmentParams {
    bool enabled = true;
    double s_min = 0.5, s_max = 1.0;  // training draws s ~ U(s_min, s_max)
    TpsParams tps;
};

double draw_shape_scale(Rng& rng, const FaceShapeAugmentParams& params);

// x_tar with the (shape-augmented) mask region blanked: x_tar * FA(1 - m_tar),
// where FA deforms m_tar and then complements.
Tensor make_inpaint_image(const Tensor& x_tar, const BinaryMask& m_tar, Rng& rng,
                          const FaceShapeAugmentParams& params = {});

struct ReferenceAugmentParams {
    double p_resize = 0.5, p_flip = 0.5, p_rotate = 0.5, p_blur = 0.3, p_elastic = 0.3;
    double resize_lo = 0.85, resize_hi = 1.2;
    double rotate_max_deg = 12.0;
    double elastic_amp_frac = 0.03;  // of image diagonal
};

// The reference augmentation operator: random resize, horizontal flip,
// rotate, blur and elastic transform, each independently activated.
Tensor reference_augment(const Tensor& image, Rng& rng, const ReferenceAugmentParams& params = {});

}  // namespace fswap

#endif
