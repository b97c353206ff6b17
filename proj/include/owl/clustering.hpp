// SPDX-License-Identifier: Apache-2.0
#ifndef OWL_CLUSTERING_HPP
#define OWL_CLUSTERING_HPP

#include <vector>

#include "owl/geometry.hpp"
#include "owl/types.hpp"

namespace owl {

struct ClusteringParams {
  double alpha = 1.0;  // scaling factor
  double beta = 0.6;   // density-sensitive factor; 0 recovers fixed-radius DBSCAN
  double r0 = 0.6;     // initial radius, meters
  int min_points = 5;
  // Density normalization anchor: expected neighbor count within the probe
  // radius for a typical object surface at 10 m range.
  double reference_neighbors = 20.0;
  // Cluster-size anchor used to clamp fitted-box scores into [0,1].
  double score_reference = 100.0;

  void validate() const {
    if (alpha <= 0.0 || beta < 0.0 || r0 <= 0.0 || min_points < 1 || reference_neighbors <= 0.0)
      throw std::invalid_argument("ClusteringParams invariant violated");
  }
  /// Largest radius the dynamic scaling can produce (at rho = 0).
  double max_radius() const { return alpha * (1.0 + beta) * r0; }
};

struct Cluster {
  std::vector<int> members;  // point indices, ascending
  Vec3 centroid{0, 0, 0};
};

/// Neighbor count within probe_radius (excluding the point itself) divided by
/// reference_neighbors.
double density_at(const PointCloud& cloud, int point_index, double probe_radius,
                  double reference_neighbors);

/// r = alpha * (1 + beta * exp(-rho)) * r0
double dynamic_radius(const ClusteringParams& params, double rho);

/// Density-based clustering where each point's neighborhood radius is
/// dynamic_radius(density_at(point, r0/2)). Core/border/noise semantics as in
/// classic DBSCAN; deterministic given input order (seed points visited in
/// index order, expansion breadth-first).
std::vector<Cluster> cluster(const PointCloud& cloud, const ClusteringParams& params);

/// Minimum-area oriented BEV rectangle (rotating calipers over the convex
/// hull); z and h from vertical min/max; canonicalized so l >= w and
/// yaw in [-pi/2, pi/2). Collinear footprints fall back to an axis-aligned
/// box and set `collinear_warning`.
Box3D fit_box(const PointCloud& cloud, const Cluster& cl, const ClusteringParams& params,
              bool* collinear_warning = nullptr);

/// cluster -> fit_box -> nms pipeline over a ground-removed scene.
std::vector<Box3D> initial_labels(const PointCloud& scene, const ClusteringParams& params,
                                  double nms_iou_threshold = 0.2);

}  // namespace owl

#endif  // OWL_CLUSTERING_HPP
