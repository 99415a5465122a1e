// Synthetic classification data: one Gaussian cluster per class.
//
// Centroids are drawn on a sphere of fixed radius from the seed, so a small
// spread gives linearly separable classes and a large spread forces overlap.

#pragma once

#include <cmath>
#include <vector>

#include "eafo/dataset.hpp"
#include "eafo/errors.hpp"
#include "eafo/rng.hpp"

namespace eafo {

struct SyntheticSpec {
  int num_examples = 1000;
  int num_classes = 10;
  int feature_dim = 32;
  double cluster_spread = 1.0;  // per-coordinate stddev around the centroid
  double centroid_radius = 3.0;
  // When positive, consecutive classes (0,1), (2,3), ... share a base
  // centroid and sit pair_separation apart. Distant pairs separate after a
  // few steps while sibling classes need fine boundaries, giving the gradual
  // accuracy curves of natural image data instead of a one-step jump.
  double pair_separation = 0.0;
  // Per-coordinate noise scale ratio. 1 = isotropic; larger values draw each
  // coordinate's noise scale log-uniformly from [1/a, a] * cluster_spread,
  // so equal-weight (nearest-centroid) boundaries are poor and gradient
  // descent has to learn the reweighting over many steps.
  double noise_anisotropy = 1.0;
};

inline Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                                  std::uint64_t variant = 0) {
  if (spec.num_classes < 2) throw config_error("synthetic: need at least 2 classes");
  if (spec.feature_dim < 1) throw config_error("synthetic: feature_dim must be >= 1");
  if (spec.num_examples < spec.num_classes)
    throw config_error("synthetic: need at least one example per class");
  if (spec.cluster_spread < 0.0) throw config_error("synthetic: spread must be >= 0");
  if (spec.pair_separation < 0.0) throw config_error("synthetic: pair_separation must be >= 0");
  if (spec.noise_anisotropy < 1.0)
    throw config_error("synthetic: noise_anisotropy must be >= 1");

  // Centroids depend on the seed only, so train/eval variants sample the
  // same class distribution with fresh noise.
  auto centroid_rng = make_stream(seed, StreamPurpose::DataGen, 0);
  auto rng = make_stream(seed, StreamPurpose::DataGen, 1, variant);

  // Class centroids: unit gaussian directions scaled to a common radius.
  std::vector<std::vector<double>> centroids(spec.num_classes,
                                             std::vector<double>(spec.feature_dim));
  auto random_direction = [&](double norm) {
    std::vector<double> v(spec.feature_dim);
    double norm2 = 0.0;
    for (double& x : v) {
      x = centroid_rng.gaussian();
      norm2 += x * x;
    }
    const double scale = norm / std::sqrt(std::max(norm2, 1e-30));
    for (double& x : v) x *= scale;
    return v;
  };
  if (spec.pair_separation > 0.0) {
    for (int c = 0; c < spec.num_classes; c += 2) {
      const auto base = random_direction(spec.centroid_radius);
      if (c + 1 < spec.num_classes) {
        const auto offset = random_direction(spec.pair_separation / 2.0);
        for (int j = 0; j < spec.feature_dim; ++j) {
          centroids[c][j] = base[j] - offset[j];
          centroids[c + 1][j] = base[j] + offset[j];
        }
      } else {
        centroids[c] = base;
      }
    }
  } else {
    for (auto& c : centroids) c = random_direction(spec.centroid_radius);
  }

  // Coordinate noise scales share the centroid stream so every variant of a
  // seed sees the same geometry.
  std::vector<double> sigma(spec.feature_dim, spec.cluster_spread);
  if (spec.noise_anisotropy > 1.0) {
    const double loga = std::log(spec.noise_anisotropy);
    for (double& s : sigma) s *= std::exp(centroid_rng.uniform(-loga, loga));
  }

  Dataset data;
  data.feature_dim = spec.feature_dim;
  data.num_classes = spec.num_classes;
  data.labels.reserve(spec.num_examples);
  data.features.reserve(static_cast<std::size_t>(spec.num_examples) * spec.feature_dim);
  for (int i = 0; i < spec.num_examples; ++i) {
    const int y = i % spec.num_classes;  // balanced classes
    data.labels.push_back(y);
    for (int j = 0; j < spec.feature_dim; ++j) {
      const double x = centroids[y][j] + sigma[j] * rng.gaussian();
      data.features.push_back(static_cast<float>(x));
    }
  }
  return data;
}

}  // namespace eafo
