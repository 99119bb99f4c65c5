#include "edgeseg/canny.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>

#include "edgeseg/errors.hpp"

namespace edgeseg {

namespace {

constexpr std::array<std::array<int, 5>, 5> kGauss{{
    {2, 4, 5, 4, 2},
    {4, 9, 12, 9, 4},
    {5, 12, 15, 12, 5},
    {4, 9, 12, 9, 4},
    {2, 4, 5, 4, 2},
}};
constexpr double kGaussNorm = 159.0;

int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

enum class Bin : std::uint8_t { Deg0, Deg45, Deg90, Deg135 };

// Exact comparisons against tan(22.5) = sqrt(2) - 1 and tan(67.5) = sqrt(2) + 1.
bool below_22_5(std::int64_t ax, std::int64_t ay, bool inclusive) {
  const std::int64_t lhs = (ax + ay) * (ax + ay);
  const std::int64_t rhs = 2 * ax * ax;
  return inclusive ? lhs <= rhs : lhs < rhs;
}

bool below_67_5(std::int64_t ax, std::int64_t ay, bool inclusive) {
  if (ay <= ax) return true;
  const std::int64_t lhs = (ay - ax) * (ay - ax);
  const std::int64_t rhs = 2 * ax * ax;
  return inclusive ? lhs <= rhs : lhs < rhs;
}

Bin direction_bin(std::int64_t gx, std::int64_t gy) {
  const std::int64_t ax = gx < 0 ? -gx : gx;
  const std::int64_t ay = gy < 0 ? -gy : gy;
  const bool same_sign = (gx >= 0) == (gy >= 0) || gx == 0 || gy == 0;
  if (same_sign) {
    // theta in [0, 90]
    if (below_22_5(ax, ay, true)) return Bin::Deg0;
    if (below_67_5(ax, ay, true)) return Bin::Deg45;
    return Bin::Deg90;
  }
  // theta = 180 - atan(ay / ax), in (90, 180)
  if (below_22_5(ax, ay, false)) return Bin::Deg0;
  if (below_67_5(ax, ay, false)) return Bin::Deg135;
  return Bin::Deg90;
}

}  // namespace

EdgeMap canny(const ImageU8& img, double low, double high) {
  if (low < 0.0 || low > high) {
    throw ConfigError("canny thresholds must satisfy 0 <= low <= high, got low=" + std::to_string(low) +
                      " high=" + std::to_string(high));
  }
  const ImageU8 luma = rgb_to_luma(img);
  const int h = luma.height, w = luma.width;
  const auto idx = [w](int y, int x) { return static_cast<std::size_t>(y) * w + x; };

  std::vector<std::int64_t> blurred(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::int64_t acc = 0;
      for (int dy = -2; dy <= 2; ++dy) {
        const int sy = reflect101(y + dy, h);
        for (int dx = -2; dx <= 2; ++dx) {
          acc += kGauss[dy + 2][dx + 2] * static_cast<std::int64_t>(luma.data[idx(sy, reflect101(x + dx, w))]);
        }
      }
      blurred[idx(y, x)] = acc;
    }
  }

  std::vector<std::int64_t> mag2(blurred.size());
  std::vector<Bin> bins(blurred.size());
  for (int y = 0; y < h; ++y) {
    const int ym = reflect101(y - 1, h), yp = reflect101(y + 1, h);
    for (int x = 0; x < w; ++x) {
      const int xm = reflect101(x - 1, w), xp = reflect101(x + 1, w);
      const auto b = [&](int yy, int xx) { return blurred[idx(yy, xx)]; };
      const std::int64_t gx = (b(ym, xp) + 2 * b(y, xp) + b(yp, xp)) - (b(ym, xm) + 2 * b(y, xm) + b(yp, xm));
      const std::int64_t gy = (b(yp, xm) + 2 * b(yp, x) + b(yp, xp)) - (b(ym, xm) + 2 * b(ym, x) + b(ym, xp));
      mag2[idx(y, x)] = gx * gx + gy * gy;
      bins[idx(y, x)] = direction_bin(gx, gy);
    }
  }

  const auto mag_at = [&](int y, int x) -> std::int64_t {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0;
    return mag2[idx(y, x)];
  };

  // 0 = none, 1 = weak, 2 = strong
  std::vector<std::uint8_t> cls(blurred.size(), 0);
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::int64_t m = mag2[idx(y, x)];
      int by = 0, bx = 0;  // offset of the negative-side neighbour
      switch (bins[idx(y, x)]) {
        case Bin::Deg0: by = 0; bx = -1; break;
        case Bin::Deg45: by = -1; bx = -1; break;
        case Bin::Deg90: by = -1; bx = 0; break;
        case Bin::Deg135: by = -1; bx = 1; break;
      }
      if (!(m > mag_at(y + by, x + bx) && m >= mag_at(y - by, x - bx))) continue;
      const double magnitude = std::sqrt(static_cast<double>(m)) / kGaussNorm;
      if (magnitude > high) {
        cls[idx(y, x)] = 2;
        queue.emplace_back(y, x);
      } else if (magnitude > low) {
        cls[idx(y, x)] = 1;
      }
    }
  }

  EdgeMap out(h, w);
  for (const auto& [y, x] : queue) out.at(y, x) = 1.0f;
  while (!queue.empty()) {
    const auto [y, x] = queue.front();
    queue.pop_front();
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int ny = y + dy, nx = x + dx;
        if ((dy == 0 && dx == 0) || ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        if (cls[idx(ny, nx)] == 1 && out.at(ny, nx) == 0.0f) {
          out.at(ny, nx) = 1.0f;
          queue.emplace_back(ny, nx);
        }
      }
    }
  }
  return out;
}

}  // namespace edgeseg
