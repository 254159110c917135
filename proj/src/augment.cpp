#include "fswap/augment.hpp"

#include <algorithm>
#include <cmath>

#include "fswap/tps.hpp"

namespace fswap {

namespace {

struct Bbox {
    int x0, y0, x1, y1;  // inclusive
};

Bbox nonzero_bbox(const BinaryMask& m) {
    int x0 = m.w(), y0 = m.h(), x1 = -1, y1 = -1;
    for (int y = 0; y < m.h(); ++y)
        for (int x = 0; x < m.w(); ++x)
            if (m.m(y, x) != 0.0) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) throw RangeError("tps_deform_mask: empty mask");
    return {x0, y0, x1, y1};
}

int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

double sample_clamped(const Eigen::ArrayXXd& img, double y, double x) {
    int yi = clampi(static_cast<int>(std::lround(y)), 0, static_cast<int>(img.rows()) - 1);
    int xi = clampi(static_cast<int>(std::lround(x)), 0, static_cast<int>(img.cols()) - 1);
    return img(yi, xi);
}

// Backward warp of a (c,h,w) tensor through a coordinate map, nearest
// neighbor with edge clamping.
template <typename CoordFn>
Tensor warp_nearest(const Tensor& img, CoordFn&& src_of) {
    Tensor out(img.shape());
    for (int y = 0; y < img.h(); ++y)
        for (int x = 0; x < img.w(); ++x) {
            auto [sy, sx] = src_of(y, x);
            int yi = clampi(static_cast<int>(std::lround(sy)), 0, img.h() - 1);
            int xi = clampi(static_cast<int>(std::lround(sx)), 0, img.w() - 1);
            for (int c = 0; c < img.c(); ++c) out.at(c, y, x) = img.at(c, yi, xi);
        }
    return out;
}

ThinPlateSpline<double> fit_lattice_spline(double x0, double y0, double x1, double y1, int lattice, double amp,
                                           Rng& rng) {
    if (lattice < 3) throw RangeError("tps_deform_mask: degenerate lattice " + std::to_string(lattice) + " < 3");
    const int n = lattice * lattice;
    ThinPlateSpline<double>::Points O(n, 2), P(n, 2);
    int idx = 0;
    for (int gy = 0; gy < lattice; ++gy)
        for (int gx = 0; gx < lattice; ++gx) {
            double px = x0 + (x1 - x0) * gx / (lattice - 1);
            double py = y0 + (y1 - y0) * gy / (lattice - 1);
            O(idx, 0) = px;
            O(idx, 1) = py;
            // |P - O| is bounded by amp in each coordinate
            P(idx, 0) = px + amp * rng.uniform(-1.0, 1.0);
            P(idx, 1) = py + amp * rng.uniform(-1.0, 1.0);
            ++idx;
        }
    ThinPlateSpline<double> spline;
    spline.fit(O, P);
    return spline;
}

}  // namespace

BinaryMask tps_deform_mask(const BinaryMask& mask, double s, Rng& rng, const TpsParams& params) {
    if (s < 0.0 || s > 1.0) throw RangeError("tps_deform_mask: s must be in [0,1], got " + std::to_string(s));
    Bbox bb = nonzero_bbox(mask);
    double diag = std::hypot(static_cast<double>(bb.x1 - bb.x0 + 1), static_cast<double>(bb.y1 - bb.y0 + 1));
    double amp = params.base_amplitude_frac * diag * s;
    double margin = amp + 1.0;
    auto spline = fit_lattice_spline(bb.x0 - margin, bb.y0 - margin, bb.x1 + margin, bb.y1 + margin, params.lattice,
                                     amp, rng);

    BinaryMask out;
    out.role = mask.role;
    out.m = Eigen::ArrayXXd::Zero(mask.h(), mask.w());
    for (int y = 0; y < mask.h(); ++y)
        for (int x = 0; x < mask.w(); ++x) {
            auto q = spline.apply(static_cast<double>(x), static_cast<double>(y));
            double v = sample_clamped(mask.m, q[1], q[0]);
            out.m(y, x) = v >= 0.5 ? 1.0 : 0.0;
        }
    return out;
}

double draw_shape_scale(Rng& rng, const FaceShapeAugmentParams& params) {
    if (params.s_min > params.s_max || params.s_min < 0.0 || params.s_max > 1.0)
        throw RangeError("draw_shape_scale: bad range");
    return rng.uniform(params.s_min, params.s_max);
}

Tensor make_inpaint_image(const Tensor& x_tar, const BinaryMask& m_tar, Rng& rng,
                          const FaceShapeAugmentParams& params) {
    if (x_tar.h() != m_tar.h() || x_tar.w() != m_tar.w())
        throw ShapeError("make_inpaint_image: image " + x_tar.shape().str() + " vs mask " + std::to_string(m_tar.h()) +
                         "x" + std::to_string(m_tar.w()));
    if (m_tar.area() == 0.0) return x_tar;  // nothing to blank, no deformation possible
    BinaryMask region = m_tar;
    if (params.enabled) {
        double s = draw_shape_scale(rng, params);
        if (s > 0.0) region = tps_deform_mask(m_tar, s, rng, params.tps);
    }
    return apply_mask(x_tar, region.complement());
}

Tensor reference_augment(const Tensor& image, Rng& rng, const ReferenceAugmentParams& params) {
    Tensor out = image;
    const double cx = (image.w() - 1) / 2.0, cy = (image.h() - 1) / 2.0;

    if (rng.uniform() < params.p_resize) {
        double scale = rng.uniform(params.resize_lo, params.resize_hi);
        out = warp_nearest(out, [&](int y, int x) {
            return std::pair<double, double>{cy + (y - cy) / scale, cx + (x - cx) / scale};
        });
    }
    if (rng.uniform() < params.p_flip) {
        int w = out.w();
        out = warp_nearest(out, [&](int y, int x) { return std::pair<double, double>{double(y), double(w - 1 - x)}; });
    }
    if (rng.uniform() < params.p_rotate) {
        double a = rng.uniform(-params.rotate_max_deg, params.rotate_max_deg) * M_PI / 180.0;
        double ca = std::cos(a), sa = std::sin(a);
        out = warp_nearest(out, [&](int y, int x) {
            double dx = x - cx, dy = y - cy;
            return std::pair<double, double>{cy + sa * dx + ca * dy, cx + ca * dx - sa * dy};
        });
    }
    if (rng.uniform() < params.p_blur) {
        Tensor blurred(out.shape());
        for (int c = 0; c < out.c(); ++c)
            for (int y = 0; y < out.h(); ++y)
                for (int x = 0; x < out.w(); ++x) {
                    double acc = 0.0;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx)
                            acc += out.at(c, clampi(y + dy, 0, out.h() - 1), clampi(x + dx, 0, out.w() - 1));
                    blurred.at(c, y, x) = acc / 9.0;
                }
        out = std::move(blurred);
    }
    if (rng.uniform() < params.p_elastic) {
        double diag = std::hypot(static_cast<double>(out.w()), static_cast<double>(out.h()));
        double amp = params.elastic_amp_frac * diag;
        auto spline = fit_lattice_spline(-amp - 1, -amp - 1, out.w() + amp, out.h() + amp, 4, amp, rng);
        out = warp_nearest(out, [&](int y, int x) {
            auto q = spline.apply(static_cast<double>(x), static_cast<double>(y));
            return std::pair<double, double>{q[1], q[0]};
        });
    }
    return out;
}

}  // namespace fswap
