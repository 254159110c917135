#include "fswap/toydata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "fswap/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fswap {

namespace {

struct Rgb {
    double r, g, b;
};

Rgb hsv(double h, double s, double v) {
    h = h - std::floor(h);
    double c = v * s;
    double hp = h * 6.0;
    double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) {
        r = c; g = x;
    } else if (hp < 2) {
        r = x; g = c;
    } else if (hp < 3) {
        g = c; b = x;
    } else if (hp < 4) {
        g = x; b = c;
    } else if (hp < 5) {
        r = x; b = c;
    } else {
        r = c; b = x;
    }
    double m = v - c;
    return {r + m, g + m, b + m};
}

// Identity-level appearance, derived deterministically from (style_seed, identity).
struct IdentityStyle {
    double face_rx, face_ry;
    Rgb skin, hair, iris, brow, lip, lip_inner, nose_tint;
    double eye_dx;        // pupil x offset from face center (fraction of size)
    double eye_y;         // eye row offset (negative = above center)
    double pupil_r, iris_r, sclera_rx, sclera_ry;
    double brow_halfw, brow_halfh, brow_gap;
    double nose_rx, nose_ry, nose_y;
    double mouth_halfw, mouth_y, lip_halfh;
    double hair_fringe, hair_grow;
    double ear_rx, ear_ry;
    bool glasses, hat;
    Rgb glasses_color, hat_color;
    double hat_line;
};

IdentityStyle identity_style(std::uint64_t style_seed, int identity) {
    Rng r = Rng(style_seed).fork(0x1De*1 + static_cast<std::uint64_t>(identity) * 0x9e37);
    IdentityStyle s{};
    s.face_rx = 0.26 + 0.03 * r.uniform();
    s.face_ry = s.face_rx * (1.18 + 0.14 * r.uniform());

    // Skin hues are stratified over a 2x2x2 (h,s,v) grid so identities stay
    // separated in color space; hue stays >= 0.11 and saturation low so red
    // dominance sits well below the lip-detector threshold.
    int cell = identity % 8;
    double h = 0.11 + 0.05 * ((cell >> 2) & 1) + 0.012 * r.uniform();
    double sat = 0.10 + 0.12 * ((cell >> 1) & 1) + 0.03 * r.uniform();
    double val = 0.68 + 0.18 * (cell & 1) + 0.04 * r.uniform();
    s.skin = hsv(h, sat, val);

    s.hair = hsv(0.02 + 0.95 * r.uniform(), 0.45 + 0.25 * r.uniform(), 0.52 + 0.28 * r.uniform());
    s.iris = hsv(0.3 + 0.45 * r.uniform(), 0.55 + 0.3 * r.uniform(), 0.52 + 0.3 * r.uniform());
    s.brow = hsv(0.05 + 0.08 * r.uniform(), 0.5, 0.51 + 0.12 * r.uniform());
    s.lip = {0.72 + 0.12 * r.uniform(), 0.10 + 0.05 * r.uniform(), 0.14 + 0.06 * r.uniform()};
    s.lip_inner = {0.48, 0.08, 0.10};
    s.nose_tint = {s.skin.r * 0.86, s.skin.g * 0.86, s.skin.b * 0.86};

    s.eye_dx = s.face_rx * (0.50 + 0.05 * r.uniform());
    s.eye_y = -s.face_ry * (0.20 + 0.06 * r.uniform());
    s.pupil_r = 0.062 + 0.006 * r.uniform();
    s.iris_r = s.pupil_r * 1.45;
    s.sclera_rx = s.pupil_r * 1.85;
    s.sclera_ry = s.pupil_r * 1.45;
    s.brow_halfw = s.sclera_rx * (1.05 + 0.2 * r.uniform());
    s.brow_halfh = 0.012 + 0.008 * r.uniform();
    s.brow_gap = s.sclera_ry + s.brow_halfh + 0.015 + 0.01 * r.uniform();
    s.nose_rx = 0.028 + 0.012 * r.uniform();
    s.nose_ry = 0.040 + 0.010 * r.uniform();
    s.nose_y = 0.03 + 0.015 * r.uniform();
    s.mouth_halfw = 0.10 + 0.03 * r.uniform();
    s.mouth_y = s.face_ry * (0.50 + 0.06 * r.uniform());
    s.lip_halfh = 0.030 + 0.010 * r.uniform();
    s.hair_fringe = 0.80 + 0.12 * r.uniform();
    s.hair_grow = 1.10 + 0.06 * r.uniform();
    s.ear_rx = 0.040 + 0.012 * r.uniform();
    s.ear_ry = 0.065 + 0.015 * r.uniform();
    s.glasses = r.uniform() < 0.35;
    s.hat = r.uniform() < 0.30;
    s.glasses_color = {0.34, 0.44, 0.56};
    s.hat_color = hsv(0.2 + 0.6 * r.uniform(), 0.5, 0.4 + 0.3 * r.uniform());
    s.hat_line = s.hair_fringe + 0.06 + 0.06 * r.uniform();
    return s;
}

struct InstanceStyle {
    Rgb bg_top, bg_bottom, cloth;
    double skin_tint[3];
    double neck_halfw, cloth_top;
    struct Freckle {
        double x, y, r;
        Rgb color;
    };
    std::vector<Freckle> freckles;
};

InstanceStyle instance_style(std::uint64_t instance_seed, const IdentityStyle& id) {
    Rng r(instance_seed);
    InstanceStyle s{};
    s.bg_top = hsv(0.45 + 0.3 * r.uniform(), 0.15 + 0.2 * r.uniform(), 0.62 + 0.28 * r.uniform());
    s.bg_bottom = hsv(0.45 + 0.3 * r.uniform(), 0.15 + 0.2 * r.uniform(), 0.55 + 0.3 * r.uniform());
    s.cloth = hsv(0.18 + 0.6 * r.uniform(), 0.35 + 0.25 * r.uniform(), 0.38 + 0.35 * r.uniform());
    for (int i = 0; i < 3; ++i) s.skin_tint[i] = r.uniform(-0.035, 0.035);
    s.neck_halfw = 0.055 + 0.02 * r.uniform();
    s.cloth_top = 0.86 + 0.04 * r.uniform();
    int nf = 3;
    for (int i = 0; i < nf; ++i) {
        InstanceStyle::Freckle f;
        double ang = r.uniform(0.0, 2.0 * M_PI);
        double rad = 0.35 + 0.45 * r.uniform();
        f.x = std::cos(ang) * id.face_rx * rad;
        f.y = 0.12 + 0.55 * id.face_ry * rad * std::abs(std::sin(ang));
        f.r = 0.016 + 0.010 * r.uniform();
        f.color = hsv(0.2 + 0.6 * r.uniform(), 0.5, 0.45 + 0.15 * r.uniform());
        s.freckles.push_back(f);
    }
    return s;
}

inline bool in_ellipse(double x, double y, double cx, double cy, double rx, double ry) {
    double dx = (x - cx) / rx, dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
}

// mouth centerline: y(t) = mouth_y + expr * camp * (2 t^2 - 1), t = lx / halfw.
// Smile (expr > 0) lifts the corners (smaller y) relative to the center.
inline double mouth_centerline(double t, const IdentityStyle& id, double expr) {
    double camp = 0.35 * id.mouth_halfw;
    return id.mouth_y + expr * camp * (1.0 - 2.0 * t * t);
}

struct Sample {
    Rgb color;
    int label;
};

// Category and color at one face-local point (lx, ly) and global point (gx, gy),
// all normalized by image size. Priority order is top-to-bottom paint order.
Sample sample_point(double lx, double ly, double gx, double gy, const IdentityStyle& id, const InstanceStyle& ins,
                    double expr) {
    const double frx = id.face_rx, fry = id.face_ry;
    bool in_face = in_ellipse(lx, ly, 0, 0, frx, fry);
    bool in_grown = in_ellipse(lx, ly, 0, 0, frx * id.hair_grow, fry * id.hair_grow);

    // glasses frame (topmost)
    if (id.glasses) {
        for (int side = -1; side <= 1; side += 2) {
            double cx = side * id.eye_dx;
            double ddx = (lx - cx) / (id.sclera_rx * 1.45), ddy = (ly - id.eye_y) / (id.sclera_ry * 1.7);
            double q = ddx * ddx + ddy * ddy;
            if (q <= 1.0 && q >= 0.62) return {id.glasses_color, kGlasses};
        }
        if (std::abs(ly - id.eye_y) < 0.010 && std::abs(lx) < id.eye_dx - id.sclera_rx * 1.2)
            return {id.glasses_color, kGlasses};
    }

    // eyes: pupil (pure black) > iris > sclera
    for (int side = -1; side <= 1; side += 2) {
        double cx = side * id.eye_dx;
        int lbl = side < 0 ? kLeftEye : kRightEye;
        if (in_ellipse(lx, ly, cx, id.eye_y, id.pupil_r, id.pupil_r)) return {{0.0, 0.0, 0.0}, lbl};
        if (in_ellipse(lx, ly, cx, id.eye_y, id.iris_r, id.iris_r)) return {id.iris, lbl};
        if (in_ellipse(lx, ly, cx, id.eye_y, id.sclera_rx, id.sclera_ry)) return {{0.93, 0.93, 0.90}, lbl};
    }

    // brows
    for (int side = -1; side <= 1; side += 2) {
        double cx = side * id.eye_dx;
        double by = id.eye_y - id.brow_gap;
        double t = (lx - cx) / id.brow_halfw;
        if (std::abs(t) <= 1.0 && std::abs(ly - (by - 0.012 * (1.0 - t * t))) <= id.brow_halfh)
            return {id.brow, side < 0 ? kLeftBrow : kRightBrow};
    }

    // mouth: inner line > lips (painted over the nose tip on overlap)
    {
        double t = lx / id.mouth_halfw;
        if (std::abs(t) <= 1.0) {
            double yc = mouth_centerline(t, id, expr);
            double h = id.lip_halfh * (1.0 - 0.3 * t * t);
            double d = ly - yc;
            if (std::abs(d) <= 0.30 * h) return {id.lip_inner, kMouth};
            if (d < 0 && d >= -h) return {id.lip, kUpperLip};
            if (d > 0 && d <= h) return {id.lip, kLowerLip};
        }
    }

    // nose
    if (in_ellipse(lx, ly, 0, id.nose_y, id.nose_rx, id.nose_ry)) return {id.nose_tint, kNose};

    // hat sits above the hair line
    if (id.hat && in_grown && ly < -fry * id.hat_line) return {id.hat_color, kHat};

    // hair: band between face ellipse and grown ellipse on the upper half,
    // plus a fringe dipping into the face
    if (in_grown && !in_face && ly < 0.15 * fry) return {id.hair, kHair};
    if (in_face) {
        double fringe = -fry * (id.hair_fringe - 0.10 * std::cos(5.0 * lx / frx));
        if (ly < fringe) return {id.hair, kHair};
    }

    // face skin with freckles (freckles keep the skin label)
    if (in_face) {
        Rgb c{std::clamp(id.skin.r + ins.skin_tint[0], 0.0, 1.0), std::clamp(id.skin.g + ins.skin_tint[1], 0.0, 1.0),
              std::clamp(id.skin.b + ins.skin_tint[2], 0.0, 1.0)};
        for (const auto& f : ins.freckles)
            if (in_ellipse(lx, ly, f.x, f.y, f.r, f.r)) return {f.color, kSkin};
        return {c, kSkin};
    }

    // ears (behind the face)
    for (int side = -1; side <= 1; side += 2) {
        double cx = side * (frx + id.ear_rx * 0.6);
        if (in_ellipse(lx, ly, cx, 0.0, id.ear_rx, id.ear_ry))
            return {{id.skin.r * 0.95, id.skin.g * 0.95, id.skin.b * 0.95}, side < 0 ? kLeftEar : kRightEar};
    }

    // unrotated body: neck then cloth then background gradient
    if (gy >= ins.cloth_top) return {ins.cloth, kCloth};
    if (std::abs(gx - 0.5) <= ins.neck_halfw && gy >= 0.52 + fry * 0.55)
        return {{id.skin.r * 0.97, id.skin.g * 0.97, id.skin.b * 0.97}, kNeck};
    double a = std::clamp(gy, 0.0, 1.0);
    return {{ins.bg_top.r * (1 - a) + ins.bg_bottom.r * a, ins.bg_top.g * (1 - a) + ins.bg_bottom.g * a,
             ins.bg_top.b * (1 - a) + ins.bg_bottom.b * a},
            kBackground};
}

Landmarks make_landmarks(const IdentityStyle& id, double expr, double theta, double cx, double cy) {
    Eigen::Matrix<double, 68, 2> local;
    int i = 0;
    // jaw 0..16 along the lower face contour
    for (int k = 0; k <= 16; ++k) {
        double t = k / 16.0;
        local(i, 0) = -id.face_rx * std::cos(t * M_PI);
        local(i, 1) = id.face_ry * std::sin(t * M_PI);
        ++i;
    }
    // brows 17..26
    for (int side = -1; side <= 1; side += 2) {
        double bx = side * id.eye_dx;
        double by = id.eye_y - id.brow_gap;
        for (int k = 0; k < 5; ++k) {
            double t = -1.0 + 0.5 * k;
            local(i, 0) = bx + t * id.brow_halfw * (side < 0 ? 1.0 : 1.0);
            local(i, 1) = by - 0.012 * (1.0 - t * t);
            ++i;
        }
    }
    // nose bridge 27..30 and base 31..35
    for (int k = 0; k < 4; ++k) {
        local(i, 0) = 0.0;
        local(i, 1) = -0.01 + (id.nose_y + id.nose_ry - (-0.01)) * k / 3.0;
        ++i;
    }
    for (int k = 0; k < 5; ++k) {
        local(i, 0) = id.nose_rx * (-1.0 + 0.5 * k);
        local(i, 1) = id.nose_y + id.nose_ry;
        ++i;
    }
    // eyes 36..47, hexagon per eye
    for (int side = -1; side <= 1; side += 2) {
        double ex = side * id.eye_dx, ey = id.eye_y;
        double rx = id.sclera_rx, ry = id.sclera_ry;
        double hx[6] = {-rx, -rx / 2, rx / 2, rx, rx / 2, -rx / 2};
        double hy[6] = {0, -ry, -ry, 0, ry, ry};
        for (int k = 0; k < 6; ++k) {
            local(i, 0) = ex + hx[k];
            local(i, 1) = ey + hy[k];
            ++i;
        }
    }
    // outer lip 48..59, inner lip 60..67
    auto lip_pt = [&](double t, double off) {
        return std::pair<double, double>{t * id.mouth_halfw, mouth_centerline(t, id, expr) + off};
    };
    const double step = 1.0 / 3.0;
    for (int k = 0; k <= 6; ++k) {  // 48..54 upper, left to right
        auto [x, y] = lip_pt(-1.0 + step * k, -id.lip_halfh);
        local(i, 0) = x;
        local(i, 1) = y;
        ++i;
    }
    for (int k = 1; k <= 5; ++k) {  // 55..59 lower, right to left
        auto [x, y] = lip_pt(1.0 - step * k, id.lip_halfh);
        local(i, 0) = x;
        local(i, 1) = y;
        ++i;
    }
    for (int k = 0; k <= 4; ++k) {  // 60..64 inner upper
        auto [x, y] = lip_pt(-1.0 + 0.5 * k, -0.3 * id.lip_halfh);
        local(i, 0) = x;
        local(i, 1) = y;
        ++i;
    }
    for (int k = 1; k <= 3; ++k) {  // 65..67 inner lower
        auto [x, y] = lip_pt(1.0 - 0.5 * k, 0.3 * id.lip_halfh);
        local(i, 0) = x;
        local(i, 1) = y;
        ++i;
    }

    double ca = std::cos(theta), sa = std::sin(theta);
    Landmarks lm;
    for (int k = 0; k < 68; ++k) {
        double x = local(k, 0), y = local(k, 1);
        lm.pts(k, 0) = std::clamp(cx + ca * x - sa * y, 0.0, 1.0);
        lm.pts(k, 1) = std::clamp(cy + sa * x + ca * y, 0.0, 1.0);
    }
    return lm;
}

}  // namespace

ToyRender render_toy_face(const ToyFactorSpec& spec, int size) {
    if (size < 16) throw RangeError("render_toy_face: size must be >= 16");
    if (spec.identity < 0) throw RangeError("render_toy_face: negative identity");
    if (std::abs(spec.pose_deg) > 45.0 || std::abs(spec.expression) > 1.0 || spec.lighting <= 0.0)
        throw RangeError("render_toy_face: factor out of range");

    IdentityStyle id = identity_style(spec.style_seed, spec.identity);
    InstanceStyle ins = instance_style(spec.instance_seed, id);
    const double theta = spec.pose_deg * M_PI / 180.0;
    const double ca = std::cos(-theta), sa = std::sin(-theta);
    const double fcx = 0.5, fcy = 0.50;

    ToyRender out;
    out.image = Tensor(3, size, size);
    out.labels.labels.resize(size, size);

    const int ss = 5;  // 5x5 supersampling for the color channels
    for (int py = 0; py < size; ++py) {
        for (int px = 0; px < size; ++px) {
            double racc = 0, gacc = 0, bacc = 0;
            for (int syi = 0; syi < ss; ++syi)
                for (int sxi = 0; sxi < ss; ++sxi) {
                    double gx = (px + (sxi + 0.5) / ss) / size;
                    double gy = (py + (syi + 0.5) / ss) / size;
                    double dx = gx - fcx, dy = gy - fcy;
                    double lx = ca * dx - sa * dy, ly = sa * dx + ca * dy;
                    Sample smp = sample_point(lx, ly, gx, gy, id, ins, spec.expression);
                    racc += smp.color.r;
                    gacc += smp.color.g;
                    bacc += smp.color.b;
                }
            double inv = 1.0 / (ss * ss);
            out.image.at(0, py, px) = std::clamp(racc * inv * spec.lighting, 0.0, 1.0);
            out.image.at(1, py, px) = std::clamp(gacc * inv * spec.lighting, 0.0, 1.0);
            out.image.at(2, py, px) = std::clamp(bacc * inv * spec.lighting, 0.0, 1.0);

            // labels from the pixel center (hard assignment)
            double gx = (px + 0.5) / size, gy = (py + 0.5) / size;
            double dx = gx - fcx, dy = gy - fcy;
            double lx = ca * dx - sa * dy, ly = sa * dx + ca * dy;
            out.labels.labels(py, px) = sample_point(lx, ly, gx, gy, id, ins, spec.expression).label;
        }
    }
    out.landmarks = make_landmarks(id, spec.expression, theta, fcx, fcy);
    return out;
}

namespace {

double darkness(const Tensor& image, int y, int x) {
    return std::max({image.at(0, y, x), image.at(1, y, x), image.at(2, y, x)});
}

// Soft-weighted centroid of the dark blob inside a circular window; the
// pupil/iris stack is concentric, so partial iris pixels sharpen the estimate
// instead of biasing it.
std::pair<double, double> refine_center(const Tensor& image, double cx, double cy, double radius) {
    const double cutoff = 0.42;
    for (int iter = 0; iter < 2; ++iter) {
        double sx = 0, sy = 0, sw = 0;
        int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
        int y1 = std::min(image.h() - 1, static_cast<int>(std::ceil(cy + radius)));
        int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
        int x1 = std::min(image.w() - 1, static_cast<int>(std::ceil(cx + radius)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                if (std::hypot(x - cx, y - cy) > radius) continue;
                double w = cutoff - darkness(image, y, x);
                if (w <= 0) continue;
                sx += x * w;
                sy += y * w;
                sw += w;
            }
        if (sw <= 0) return {cx, cy};
        cx = sx / sw;
        cy = sy / sw;
    }
    return {cx, cy};
}

}  // namespace

std::optional<double> estimate_pose_deg(const Tensor& image) {
    // stage 1: hard-threshold pupil pixels, split along the principal axis
    const double thresh = 0.13;
    std::vector<std::array<double, 3>> pts;  // x, y, weight
    double wsum = 0;
    for (int y = 0; y < image.h(); ++y)
        for (int x = 0; x < image.w(); ++x) {
            double mx = darkness(image, y, x);
            if (mx < thresh) {
                double w = thresh - mx;
                pts.push_back({static_cast<double>(x), static_cast<double>(y), w});
                wsum += w;
            }
        }
    if (pts.size() < 4 || wsum <= 0) return std::nullopt;
    double cx = 0, cy = 0;
    for (auto& p : pts) {
        cx += p[0] * p[2];
        cy += p[1] * p[2];
    }
    cx /= wsum;
    cy /= wsum;
    double sxx = 0, sxy = 0, syy = 0;
    for (auto& p : pts) {
        double dx = p[0] - cx, dy = p[1] - cy;
        sxx += p[2] * dx * dx;
        sxy += p[2] * dx * dy;
        syy += p[2] * dy * dy;
    }
    double ang = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    double ux = std::cos(ang), uy = std::sin(ang);
    double lw = 0, lx = 0, ly = 0, rw = 0, rx = 0, ry = 0;
    for (auto& p : pts) {
        double proj = (p[0] - cx) * ux + (p[1] - cy) * uy;
        if (proj < 0) {
            lw += p[2];
            lx += p[0] * p[2];
            ly += p[1] * p[2];
        } else {
            rw += p[2];
            rx += p[0] * p[2];
            ry += p[1] * p[2];
        }
    }
    if (lw <= 0 || rw <= 0) return std::nullopt;
    lx /= lw;
    ly /= lw;
    rx /= rw;
    ry /= rw;

    // stage 2: subpixel refinement of each pupil center
    double win = 0.11 * std::min(image.h(), image.w());
    std::tie(lx, ly) = refine_center(image, lx, ly, win);
    std::tie(rx, ry) = refine_center(image, rx, ry, win);

    if (std::hypot(rx - lx, ry - ly) < 2.0) return std::nullopt;
    if (rx < lx) {
        std::swap(rx, lx);
        std::swap(ry, ly);
    }
    return std::atan2(ry - ly, rx - lx) * 180.0 / M_PI;
}

std::optional<double> estimate_expression(const Tensor& image) {
    auto pose = estimate_pose_deg(image);
    if (!pose) return std::nullopt;
    double th = -*pose * M_PI / 180.0;
    double ca = std::cos(th), sa = std::sin(th);
    std::vector<std::array<double, 3>> lips;  // derotated (x, y), redness weight
    for (int y = 0; y < image.h(); ++y)
        for (int x = 0; x < image.w(); ++x) {
            double r = image.at(0, y, x), g = image.at(1, y, x), b = image.at(2, y, x);
            double redness = r - std::max(g, b);
            if (r >= 0.35 && redness >= 0.22)
                lips.push_back({ca * x - sa * y, sa * x + ca * y, redness});
        }
    if (lips.size() < 6) return std::nullopt;
    double x0 = 1e9, x1 = -1e9;
    for (auto& p : lips) {
        x0 = std::min(x0, p[0]);
        x1 = std::max(x1, p[0]);
    }
    double halfw = (x1 - x0) / 2.0, xc = (x0 + x1) / 2.0;
    if (halfw < 2.0) return std::nullopt;
    double ymid = 0, wmid = 0, yedge = 0, wedge = 0;
    for (auto& p : lips) {
        double t = (p[0] - xc) / halfw;
        if (std::abs(t) < 1.0 / 3.0) {
            ymid += p[1] * p[2];
            wmid += p[2];
        } else if (std::abs(t) > 2.0 / 3.0) {
            yedge += p[1] * p[2];
            wedge += p[2];
        }
    }
    if (wmid <= 0 || wedge <= 0) return std::nullopt;
    double camp = 0.35 * halfw;
    double e = (ymid / wmid - yedge / wedge) / (2.0 * camp);
    return std::clamp(e, -1.0, 1.0);
}

std::vector<int> Dataset::split_indices(const std::string& split) const {
    std::vector<int> idx;
    for (int i = 0; i < size(); ++i)
        if (items[i].split == split) idx.push_back(i);
    return idx;
}

Dataset generate_toy_dataset(int identities, int per_identity, int size, std::uint64_t seed,
                             const std::string& out_dir) {
    if (identities < 2 || per_identity < 1)
        throw RangeError("generate_toy_dataset: need identities >= 2 and per_identity >= 1");
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "labels");
    fs::create_directories(fs::path(out_dir) / "landmarks");

    Rng master(seed);
    std::string manifest;
    int index = 0;
    for (int id = 0; id < identities; ++id) {
        for (int k = 0; k < per_identity; ++k) {
            Rng item_rng = master.fork(0xA11 + static_cast<std::uint64_t>(index) * 7919);
            ToyFactorSpec spec;
            spec.identity = id;
            spec.style_seed = seed;
            spec.pose_deg = item_rng.uniform(-kToyPoseRangeDeg, kToyPoseRangeDeg);
            spec.expression = item_rng.uniform(-1.0, 1.0);
            spec.lighting = item_rng.uniform(kToyLightingMin, kToyLightingMax);
            spec.instance_seed = mix_seed(seed, 0xF00D + static_cast<std::uint64_t>(index));
            ToyRender r = render_toy_face(spec, size);

            char name[64];
            std::snprintf(name, sizeof(name), "%05d", index);
            std::string img_rel = "images/img_" + std::string(name) + ".ppm";
            std::string lbl_rel = "labels/lbl_" + std::string(name) + ".pgm";
            std::string lmk_rel = "landmarks/lmk_" + std::string(name) + ".txt";
            write_ppm(out_dir + "/" + img_rel, r.image);
            write_pgm(out_dir + "/" + lbl_rel, r.labels);
            r.landmarks.to_file(out_dir + "/" + lmk_rel);

            json row;
            row["index"] = index;
            row["image"] = img_rel;
            row["labels"] = lbl_rel;
            row["landmarks"] = lmk_rel;
            row["identity"] = id;
            row["pose_deg"] = spec.pose_deg;
            row["expression"] = spec.expression;
            row["lighting"] = spec.lighting;
            row["instance_seed"] = spec.instance_seed;
            row["split"] = (k < per_identity / 2 || per_identity == 1) ? "train" : "val";
            row["checksum_image"] = to_hex(file_digest(out_dir + "/" + img_rel));
            row["checksum_labels"] = to_hex(file_digest(out_dir + "/" + lbl_rel));
            row["checksum_landmarks"] = to_hex(file_digest(out_dir + "/" + lmk_rel));
            manifest += row.dump() + "\n";
            ++index;
        }
    }
    json header;
    header["kind"] = "toy_face_dataset";
    header["image_size"] = size;
    header["identities"] = identities;
    header["per_identity"] = per_identity;
    header["seed"] = seed;
    header["categories"] = [] {
        std::vector<std::string> v;
        for (auto* n : mask_category_names()) v.emplace_back(n);
        return v;
    }();
    write_text_file(out_dir + "/manifest.jsonl", header.dump() + "\n" + manifest);
    return load_dataset(out_dir);
}

namespace {

std::uint64_t hex_to_u64(const std::string& s) { return std::stoull(s, nullptr, 16); }

}  // namespace

Dataset load_dataset(const std::string& dir) {
    std::string manifest_path = dir + "/manifest.jsonl";
    if (!fs::exists(manifest_path)) throw IoError("load_dataset: missing manifest " + manifest_path);
    std::istringstream in(read_text_file(manifest_path));
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("load_dataset: empty manifest " + manifest_path);
    json header = json::parse(line);
    if (header.value("kind", "") != "toy_face_dataset")
        throw SchemaError("load_dataset: unrecognized manifest header in " + manifest_path);

    Dataset ds;
    ds.root = dir;
    ds.image_size = header["image_size"].get<int>();
    ds.seed = header["seed"].get<std::uint64_t>();

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json row = json::parse(line);
        ToyItem it;
        it.index = row["index"].get<int>();
        it.image_path = row["image"].get<std::string>();
        it.labels_path = row["labels"].get<std::string>();
        it.landmarks_path = row["landmarks"].get<std::string>();
        it.identity = row["identity"].get<int>();
        it.pose_deg = row["pose_deg"].get<double>();
        it.expression = row["expression"].get<double>();
        it.lighting = row["lighting"].get<double>();
        it.instance_seed = row["instance_seed"].get<std::uint64_t>();
        it.split = row["split"].get<std::string>();
        it.checksum_image = hex_to_u64(row["checksum_image"].get<std::string>());
        it.checksum_labels = hex_to_u64(row["checksum_labels"].get<std::string>());
        it.checksum_landmarks = hex_to_u64(row["checksum_landmarks"].get<std::string>());

        for (const auto& [rel, sum] : {std::pair{it.image_path, it.checksum_image},
                                       {it.labels_path, it.checksum_labels},
                                       {it.landmarks_path, it.checksum_landmarks}}) {
            std::string full = dir + "/" + rel;
            if (!fs::exists(full)) throw IoError("load_dataset: missing file " + full);
            if (file_digest(full) != sum) throw SchemaError("load_dataset: checksum mismatch for " + full);
        }

        Tensor img = read_ppm(dir + "/" + it.image_path);
        if (img.h() != ds.image_size || img.w() != ds.image_size)
            throw SchemaError("load_dataset: image size mismatch in " + it.image_path);
        MaskLabelMap lbl = read_pgm(dir + "/" + it.labels_path);
        lbl.validate(it.labels_path);
        if (lbl.h() != ds.image_size || lbl.w() != ds.image_size)
            throw SchemaError("load_dataset: label size mismatch in " + it.labels_path);
        Landmarks lmk = Landmarks::from_file(dir + "/" + it.landmarks_path);

        ds.items.push_back(it);
        ds.images_.push_back(std::move(img));
        ds.labels_.push_back(std::move(lbl));
        ds.landmarks_.push_back(lmk);
    }
    if (ds.items.empty()) throw SchemaError("load_dataset: manifest has no items in " + manifest_path);
    return ds;
}

}  // namespace fswap
