#pragma once

#include "edgeseg/image.hpp"

namespace edgeseg {

inline constexpr double kCannyLow = 100.0;
inline constexpr double kCannyHigh = 200.0;

/// Classical Canny edge detector; returns a binary map (values 0 or 1).
///
/// Pipeline, all in integer arithmetic up to the threshold comparison so the
/// output is bit-exact everywhere:
///  - RGB input is reduced to luma first.
///  - 5x5 Gaussian (sigma 1.4, the integer kernel normalised by 159) with
///    reflect-101 borders; the blurred image is kept at the x159 scale.
///  - 3x3 Sobel gradients, reflect-101 borders.
///  - Gradient direction quantised to 0/45/90/135 degrees by nearest bin,
///    boundaries resolved towards the lower angle.
///  - Non-maximum suppression: a pixel survives if its magnitude is strictly
///    greater than the neighbour on the negative side of the gradient and
///    at least the neighbour on the positive side (out-of-image = 0).
///  - Magnitude sqrt(gx^2 + gy^2) / 159 is on the 0-255 intensity scale;
///    strong means > high, weak means > low.
///  - Hysteresis keeps weak pixels 8-connected to a strong pixel (BFS).
///
/// Throws ConfigError if low > high or low < 0.
EdgeMap canny(const ImageU8& img, double low = kCannyLow, double high = kCannyHigh);

}  // namespace edgeseg
