#pragma once

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace lskkf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Thrown on dimension mismatches; the message names the operator kind and sizes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown on numeric breakdown (NaN/Inf iterates, failed factorizations, ...).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rectilinear grid metadata. Flat indices are row-major over
/// (axis 1, axis 2, axis 3): flat = (i1*n2 + i2)*n3 + i3. Unused axes have
/// extent 1 and spacing 1.
struct Grid {
  int dims = 1;
  std::array<Index, 3> shape{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  Index size() const { return shape[0] * shape[1] * shape[2]; }
  double cell_volume() const;

  std::array<Index, 3> unflatten(Index flat) const;
  Index flatten(const std::array<Index, 3>& idx) const;

  /// Physical coordinates of grid point i (cell centers at idx*spacing).
  std::array<double, 3> point(Index flat) const;

  bool operator==(const Grid& o) const;

  void validate() const;  // dims in {1,2,3}, positive shape and spacing
};

Grid make_grid(const std::vector<Index>& shape, const std::vector<double>& spacing);

/// Values sampled on a rectilinear grid; the spatial view of a state vector.
struct ScalarField {
  Grid grid;
  Vector values;

  ScalarField() = default;
  ScalarField(Grid g, Vector v);

  Index size() const { return values.size(); }
};

ScalarField constant_field(const Grid& grid, double value);

/// Disjoint binary masks partitioning (part of) a grid.
class MaskSet {
 public:
  MaskSet() = default;

  /// Validates that every value is 0 or 1 and masks are pairwise disjoint.
  explicit MaskSet(std::vector<ScalarField> masks);

  const std::vector<ScalarField>& masks() const { return masks_; }
  Index count() const { return static_cast<Index>(masks_.size()); }
  const ScalarField& mask(Index i) const { return masks_.at(static_cast<size_t>(i)); }
  const Grid& grid() const;

  /// True when the masks sum to exactly 1 at every grid point.
  bool covering() const;

  /// Index of the mask containing flat index i, or -1 if uncovered.
  int material_of(Index flat) const;

  /// Flat indices where mask m is 1, ascending.
  std::vector<Index> indices_of(Index m) const;

 private:
  std::vector<ScalarField> masks_;
};

// SF1 binary format: ASCII header "SF1 D n_1 .. n_D dx_1 .. dx_D\n" followed
// by little-endian 64-bit floats, row-major, exactly prod(n_d) values.
void write_sf1(const ScalarField& field, const std::string& path);
ScalarField read_sf1(const std::string& path);

// CSV export: header "# SF1-csv shape=n_1xn_2x..." then one value per line,
// row-major.
void write_sf1_csv(const ScalarField& field, const std::string& path);

}  // namespace lskkf
