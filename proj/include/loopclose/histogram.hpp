#pragma once

#include <array>
#include <cmath>
#include <ostream>
#include <string>

namespace loopclose {

/// 60x60 histogram of feature-direction Euler angles at 3 degrees per bin.
/// Rows index the yaw bin (phi), columns the pitch bin (theta).
class Histogram2D {
 public:
  static constexpr int kBins = 60;
  static constexpr double kBinDegrees = 3.0;

  double& at(int phi_bin, int theta_bin) { return bins_[phi_bin * kBins + theta_bin]; }
  double at(int phi_bin, int theta_bin) const { return bins_[phi_bin * kBins + theta_bin]; }

  const std::array<double, kBins * kBins>& data() const { return bins_; }
  std::array<double, kBins * kBins>& data() { return bins_; }

  double total() const {
    double s = 0.0;
    for (double v : bins_) s += v;
    return s;
  }

  friend bool operator==(const Histogram2D&, const Histogram2D&) = default;

 private:
  std::array<double, kBins * kBins> bins_{};
};

/// 5x5 Gaussian blur, sigma = 1 bin. Each source bin scatters its mass over
/// the in-domain part of the kernel, renormalized so the histogram total is
/// preserved at the boundary.
inline Histogram2D gaussian_blur(const Histogram2D& h, double sigma = 1.0) {
  constexpr int kRadius = 2;
  double kernel[2 * kRadius + 1][2 * kRadius + 1];
  for (int dy = -kRadius; dy <= kRadius; ++dy) {
    for (int dx = -kRadius; dx <= kRadius; ++dx) {
      kernel[dy + kRadius][dx + kRadius] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  }
  Histogram2D out;
  const int n = Histogram2D::kBins;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double mass = h.at(r, c);
      if (mass == 0.0) continue;
      double in_domain = 0.0;
      for (int dy = -kRadius; dy <= kRadius; ++dy) {
        for (int dx = -kRadius; dx <= kRadius; ++dx) {
          const int rr = r + dy;
          const int cc = c + dx;
          if (rr >= 0 && rr < n && cc >= 0 && cc < n) {
            in_domain += kernel[dy + kRadius][dx + kRadius];
          }
        }
      }
      const double scale = mass / in_domain;
      for (int dy = -kRadius; dy <= kRadius; ++dy) {
        for (int dx = -kRadius; dx <= kRadius; ++dx) {
          const int rr = r + dy;
          const int cc = c + dx;
          if (rr >= 0 && rr < n && cc >= 0 && cc < n) {
            out.at(rr, cc) += scale * kernel[dy + kRadius][dx + kRadius];
          }
        }
      }
    }
  }
  return out;
}

/// CSV dump: 60 rows (phi bins) of 60 comma-separated values (theta bins).
inline void write_histogram_csv(std::ostream& os, const Histogram2D& h) {
  char buf[64];
  for (int r = 0; r < Histogram2D::kBins; ++r) {
    for (int c = 0; c < Histogram2D::kBins; ++c) {
      std::snprintf(buf, sizeof(buf), "%.12g", h.at(r, c));
      os << buf;
      if (c + 1 < Histogram2D::kBins) os << ',';
    }
    os << '\n';
  }
}

}  // namespace loopclose
