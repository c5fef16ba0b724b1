#include "gravitree/nn_index.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>

namespace gravitree {

void NnIndex::insert(VertexId id, const State& x) {
  const int node_index = static_cast<int>(nodes_.size());
  if (nodes_.empty()) {
    nodes_.push_back({id, x, 0});
    return;
  }
  int cur = 0;
  for (;;) {
    Node& node = nodes_[static_cast<std::size_t>(cur)];
    const bool go_left = x[node.axis] < node.point[node.axis];
    int& child = go_left ? node.left : node.right;
    if (child < 0) {
      child = node_index;
      const int axis = (node.axis + 1) % sys_->n;
      nodes_.push_back({id, x, axis});
      return;
    }
    cur = child;
  }
}

double NnIndex::axis_gap(int axis, double q, double lo, double hi) const {
  if (q >= lo && q <= hi) return 0.0;
  if (!sys_->is_wrapped(axis)) return q < lo ? lo - q : q - hi;
  const double two_pi = 2.0 * std::numbers::pi;
  return std::min(std::abs(std::remainder(q - lo, two_pi)), std::abs(std::remainder(q - hi, two_pi)));
}

template <typename Visit>
void NnIndex::search(int node_index, const State& q, Eigen::VectorXd& lo, Eigen::VectorXd& hi,
                     double& bound, Visit&& visit) const {
  if (node_index < 0) return;
  double gap2 = 0.0;
  for (int a = 0; a < sys_->n; ++a) {
    const double g = axis_gap(a, q[a], lo[a], hi[a]);
    gap2 += g * g;
  }
  if (std::sqrt(gap2) > bound) return;

  const Node& node = nodes_[static_cast<std::size_t>(node_index)];
  visit(node.id, state_distance(*sys_, q, node.point), bound);

  const int axis = node.axis;
  const double split = node.point[axis];
  const bool q_left = q[axis] < split;
  const int near = q_left ? node.left : node.right;
  const int far = q_left ? node.right : node.left;

  auto descend = [&](int child, bool left_side) {
    if (child < 0) return;
    const double saved = left_side ? hi[axis] : lo[axis];
    (left_side ? hi[axis] : lo[axis]) = split;
    search(child, q, lo, hi, bound, visit);
    (left_side ? hi[axis] : lo[axis]) = saved;
  };
  descend(near, q_left);
  descend(far, !q_left);
}

std::vector<NnIndex::Hit> NnIndex::nearest(const State& x, std::size_t k) const {
  std::vector<Hit> out;
  if (nodes_.empty() || k == 0) return out;
  State q = x;
  wrap_state(*sys_, q);
  Eigen::VectorXd lo(sys_->n), hi(sys_->n);
  for (int a = 0; a < sys_->n; ++a) {
    lo[a] = sys_->is_wrapped(a) ? -std::numbers::pi : -kInfinity;
    hi[a] = sys_->is_wrapped(a) ? std::numbers::pi : kInfinity;
  }

  auto worse = [](const Hit& a, const Hit& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  };
  std::priority_queue<Hit, std::vector<Hit>, decltype(worse)> heap(worse);
  double bound = kInfinity;
  search(0, q, lo, hi, bound, [&](VertexId id, double d, double& b) {
    if (heap.size() < k) {
      heap.push({id, d});
    } else if (worse({id, d}, heap.top())) {
      heap.pop();
      heap.push({id, d});
    } else {
      return;
    }
    if (heap.size() == k) b = heap.top().distance;
  });

  out.reserve(heap.size());
  while (!heap.empty()) {
    out.push_back(heap.top());
    heap.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<NnIndex::Hit> NnIndex::within(const State& x, double radius) const {
  std::vector<Hit> out;
  if (nodes_.empty()) return out;
  State q = x;
  wrap_state(*sys_, q);
  Eigen::VectorXd lo(sys_->n), hi(sys_->n);
  for (int a = 0; a < sys_->n; ++a) {
    lo[a] = sys_->is_wrapped(a) ? -std::numbers::pi : -kInfinity;
    hi[a] = sys_->is_wrapped(a) ? std::numbers::pi : kInfinity;
  }
  double bound = radius;
  search(0, q, lo, hi, bound, [&](VertexId id, double d, double&) {
    if (d < radius) out.push_back({id, d});
  });
  std::sort(out.begin(), out.end(), [](const Hit& a, const Hit& b) { return a.id < b.id; });
  return out;
}

}  // namespace gravitree
