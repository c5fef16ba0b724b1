#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace gravitree {

using State = Eigen::VectorXd;
using Control = Eigen::VectorXd;

using VertexId = std::uint32_t;
using EdgeId = std::uint32_t;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Axis-aligned box [lo, hi] in R^d.
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  Eigen::Index dim() const { return lo.size(); }
  bool contains(const Eigen::VectorXd& x) const;
  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const;
  Eigen::VectorXd center() const { return 0.5 * (lo + hi); }
  double diameter() const { return (hi - lo).norm(); }
  bool contains_box(const Box& other) const;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class IntegrationDiverged : public Error {
 public:
  using Error::Error;
};

class OutOfBounds : public Error {
 public:
  using Error::Error;
};

class InfeasibleEdge : public Error {
 public:
  InfeasibleEdge(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class FileMissing : public Error {
 public:
  using Error::Error;
};

class SchemaViolation : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public SchemaViolation {
 public:
  using SchemaViolation::SchemaViolation;
};

class CorruptFile : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace gravitree
