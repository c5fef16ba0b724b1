#pragma once

#include "gravitree/dynamics.hpp"

#include <vector>

namespace gravitree {

/// Incremental kd-tree over vertex states. Distances use the system metric:
/// Euclidean with shortest angular differences on wrapped axes. Points are
/// inserted in id order and never removed.
class NnIndex {
 public:
  struct Hit {
    VertexId id;
    double distance;
  };

  explicit NnIndex(const SystemDef* sys) : sys_(sys) {}

  void insert(VertexId id, const State& x);
  std::size_t size() const noexcept { return nodes_.size(); }

  /// The k nearest points ordered by (distance, id). Returns fewer when the
  /// index holds fewer than k points.
  std::vector<Hit> nearest(const State& x, std::size_t k) const;

  /// Every point with distance strictly below `radius`, ordered by id.
  std::vector<Hit> within(const State& x, double radius) const;

 private:
  struct Node {
    VertexId id;
    State point;
    int axis;
    int left = -1;
    int right = -1;
  };

  double axis_gap(int axis, double q, double lo, double hi) const;
  template <typename Visit>
  void search(int node, const State& q, Eigen::VectorXd& lo, Eigen::VectorXd& hi, double& bound,
              Visit&& visit) const;

  const SystemDef* sys_;
  std::vector<Node> nodes_;
};

}  // namespace gravitree
