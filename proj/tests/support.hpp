#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "sdi/datasets.hpp"
#include "sdi/energy_field.hpp"
#include "sdi/eval.hpp"
#include "sdi/geometry.hpp"
#include "sdi/random.hpp"

namespace sdi::testing {

/// E(x) = a.x + b.
class AffineField final : public EnergyField {
 public:
  AffineField(Eigen::VectorXd a, double b) : a_(std::move(a)), b_(b) {}
  int input_dim() const override { return static_cast<int>(a_.size()); }
  void evaluate(const Eigen::Ref<const Eigen::MatrixXd>& points, Eigen::VectorXd& values,
                Eigen::MatrixXd* gradients) const override {
    check_dim(points.rows());
    values = (a_.transpose() * points).transpose().array() + b_;
    if (gradients != nullptr) *gradients = a_.replicate(1, points.cols());
  }

 private:
  Eigen::VectorXd a_;
  double b_;
};

/// E(x) = peak - k |x - c|^2.
class QuadraticField final : public EnergyField {
 public:
  QuadraticField(Eigen::VectorXd c, double peak, double k) : c_(std::move(c)), peak_(peak), k_(k) {}
  int input_dim() const override { return static_cast<int>(c_.size()); }
  void evaluate(const Eigen::Ref<const Eigen::MatrixXd>& points, Eigen::VectorXd& values,
                Eigen::MatrixXd* gradients) const override {
    check_dim(points.rows());
    const Eigen::MatrixXd d = points.colwise() - c_;
    values = (peak_ - k_ * d.colwise().squaredNorm().array()).transpose();
    if (gradients != nullptr) *gradients = -2.0 * k_ * d;
  }

 private:
  Eigen::VectorXd c_;
  double peak_;
  double k_;
};

inline Eigen::Matrix3d random_rotation(Rng& rng) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

/// Star-shaped (hence simple) polygon around a random centre in the image.
inline std::vector<Eigen::Vector2d> random_star_polygon(Rng& rng, int width, int height,
                                                        bool integer_vertices) {
  std::uniform_int_distribution<int> count(3, 12);
  const int n = count(rng);
  const double r_max = 0.45 * std::min(width, height);
  const Eigen::Vector2d c(uniform(rng, r_max, width - 1 - r_max), uniform(rng, r_max, height - 1 - r_max));
  std::vector<double> angles(static_cast<std::size_t>(n));
  for (auto& a : angles) a = uniform(rng, 0.0, 2.0 * M_PI);
  std::sort(angles.begin(), angles.end());
  std::vector<Eigen::Vector2d> out;
  for (double a : angles) {
    const double r = uniform(rng, 0.3, 1.0) * r_max;
    Eigen::Vector2d p = c + r * Eigen::Vector2d(std::cos(a), std::sin(a));
    if (integer_vertices) p = p.array().round();
    out.push_back(p);
  }
  return out;
}

/// Boundary-inclusive even-odd membership of one pixel centre, by brute force.
inline bool even_odd_contains(const std::vector<Eigen::Vector2d>& poly, double x, double y) {
  const std::size_t n = poly.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Eigen::Vector2d& a = poly[i];
    const Eigen::Vector2d& b = poly[j];
    const double cross = (b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x());
    const bool within = x >= std::min(a.x(), b.x()) - 1e-12 && x <= std::max(a.x(), b.x()) + 1e-12 &&
                        y >= std::min(a.y(), b.y()) - 1e-12 && y <= std::max(a.y(), b.y()) + 1e-12;
    if (std::abs(cross) <= 1e-9 * std::max(1.0, (b - a).norm()) && within) return true;
    if ((a.y() > y) != (b.y() > y)) {
      const double xc = a.x() + (y - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (x < xc) inside = !inside;
    }
  }
  return inside;
}

inline std::vector<geometry::Pixel> brute_force_pixels(const std::vector<Eigen::Vector2d>& poly, int width,
                                                       int height) {
  std::vector<geometry::Pixel> out;
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      if (even_odd_contains(poly, u, v)) out.push_back({u, v});
    }
  }
  return out;
}

/// Single-linkage clusters of 2D points; returns the cluster index of each point.
inline std::vector<int> single_linkage(const std::vector<Eigen::Vector2d>& pts, double threshold) {
  const int n = static_cast<int>(pts.size());
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  int next = 0;
  for (int s = 0; s < n; ++s) {
    if (label[static_cast<std::size_t>(s)] >= 0) continue;
    std::vector<int> stack{s};
    label[static_cast<std::size_t>(s)] = next;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      for (int j = 0; j < n; ++j) {
        if (label[static_cast<std::size_t>(j)] < 0 &&
            (pts[static_cast<std::size_t>(i)] - pts[static_cast<std::size_t>(j)]).norm() <= threshold) {
          label[static_cast<std::size_t>(j)] = next;
          stack.push_back(j);
        }
      }
    }
    ++next;
  }
  return label;
}

/// Exhaustive search over a 2 cm x, y, z grid and 72 yaw steps for the base
/// reaching the most points. Bases failing `admissible` are skipped; only
/// counts above `floor` replace `best`. Returns the best count.
inline int grid_optimum(const eval::CoverageOracle& oracle, const Eigen::Matrix3Xd& pts, const Eigen::Vector2d& lo,
                        const Eigen::Vector2d& hi, const datasets::Limits& limits, int floor,
                        kinematics::BaseConfig& best, const std::function<bool(double, double)>& admissible) {
  const int n = static_cast<int>(pts.cols());
  const double h = 0.02;
  const int nz = static_cast<int>(std::ceil((limits.z_max - limits.z_min) / h)) + 1;
  std::vector<Eigen::Vector2d> xy;
  for (double x = lo.x(); x <= hi.x(); x += h) {
    for (double y = lo.y(); y <= hi.y(); y += h) {
      if (admissible(x, y)) xy.emplace_back(x, y);
    }
  }
  int best_count = floor;
  for (int k = 0; k < 72; ++k) {
    const double omega = limits.omega_min + k * (2.0 * std::numbers::pi / 72.0);
    if (omega > limits.omega_max) break;
    const Eigen::Matrix3d rt = Eigen::AngleAxisd(-omega, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    for (int iz = 0; iz < nz; ++iz) {
      const double z = std::min(limits.z_min + iz * h, limits.z_max);
      for (const auto& p : xy) {
        const Eigen::Vector3d b(p.x(), p.y(), z);
        int hits = 0;
        int misses = 0;
        for (int i = 0; i < n && misses <= n - best_count - 1; ++i) {
          if (oracle.reachable_local(rt * (pts.col(i) - b))) {
            ++hits;
          } else {
            ++misses;
          }
        }
        if (hits > best_count) {
          best_count = hits;
          best = {p.x(), p.y(), z, omega};
        }
      }
    }
  }
  return best_count;
}

}  // namespace sdi::testing
