#ifndef FSWAP_LANDMARKS_HPP
#define FSWAP_LANDMARKS_HPP

#include <Eigen/Dense>
#include <string>

#include "fswap/common.hpp"
#include "fswap/tensor.hpp"

namespace fswap {

// 68 facial landmarks, normalized to [0,1] relative to image width/height.
struct Landmarks {
    Eigen::Matrix<double, 68, 2> pts = Eigen::Matrix<double, 68, 2>::Zero();

    void validate() const {
        for (int i = 0; i < 68; ++i)
            for (int d = 0; d < 2; ++d) {
                double v = pts(i, d);
                if (!(v >= 0.0 && v <= 1.0))
                    throw RangeError("Landmarks: coordinate out of [0,1] at point " + std::to_string(i));
            }
    }

    Tensor flatten() const {  // (136,1,1): x0 y0 x1 y1 ...
        Tensor t(136, 1, 1);
        for (int i = 0; i < 68; ++i) {
            t[2 * i] = pts(i, 0);
            t[2 * i + 1] = pts(i, 1);
        }
        return t;
    }

    static Landmarks from_file(const std::string& path);
    void to_file(const std::string& path) const;
};

}  // namespace fswap

#endif
