#include "lskkf/export.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

namespace lskkf {

ScalarField slice_field(const ScalarField& field, int axis, Index index) {
  field.grid.validate();
  if (axis < 0 || axis >= field.grid.dims)
    throw ShapeError("slice: axis " + std::to_string(axis) + " out of range for " +
                     std::to_string(field.grid.dims) + "-D field");
  if (index < 0 || index >= field.grid.shape[static_cast<size_t>(axis)])
    throw ShapeError("slice: index " + std::to_string(index) + " out of range");
  if (field.grid.dims == 1) {
    Grid point_grid = make_grid({1}, {field.grid.spacing[0]});
    Vector v(1);
    v[0] = field.values[index];
    return {point_grid, std::move(v)};
  }

  std::vector<Index> shape;
  std::vector<double> spacing;
  for (int d = 0; d < field.grid.dims; ++d) {
    if (d == axis) continue;
    shape.push_back(field.grid.shape[static_cast<size_t>(d)]);
    spacing.push_back(field.grid.spacing[static_cast<size_t>(d)]);
  }
  Grid out_grid = make_grid(shape, spacing);
  Vector out(out_grid.size());
  for (Index flat = 0; flat < out_grid.size(); ++flat) {
    const auto rest = out_grid.unflatten(flat);
    std::array<Index, 3> full{0, 0, 0};
    int r = 0;
    for (int d = 0; d < field.grid.dims; ++d)
      full[static_cast<size_t>(d)] =
          (d == axis) ? index : rest[static_cast<size_t>(r++)];
    out[flat] = field.values[field.grid.flatten(full)];
  }
  return {out_grid, std::move(out)};
}

void write_pgm16(const ScalarField& field, const std::string& path) {
  field.grid.validate();
  if (field.grid.dims > 2)
    throw ShapeError("pgm: field is " + std::to_string(field.grid.dims) +
                     "-D, take a 2-D slice first");
  const Index height = field.grid.dims == 2 ? field.grid.shape[0] : 1;
  const Index width = field.grid.dims == 2 ? field.grid.shape[1] : field.grid.shape[0];

  const double lo = field.values.minCoeff();
  const double hi = field.values.maxCoeff();
  const double span = hi - lo;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot write " + path);
  out << "P5\n" << width << ' ' << height << "\n65535\n";
  for (Index i = 0; i < field.values.size(); ++i) {
    const double t = span > 0.0 ? (field.values[i] - lo) / span : 0.0;
    const auto sample = static_cast<unsigned>(std::lround(t * 65535.0));
    const unsigned char bytes[2] = {static_cast<unsigned char>((sample >> 8) & 0xff),
                                    static_cast<unsigned char>(sample & 0xff)};
    out.write(reinterpret_cast<const char*>(bytes), 2);
  }
  if (!out) throw std::runtime_error("pgm: write failed for " + path);

  std::ofstream sidecar(path + ".txt");
  if (!sidecar) throw std::runtime_error("pgm: cannot write sidecar for " + path);
  char line[96];
  std::snprintf(line, sizeof line, "min %.17g\nmax %.17g\n", lo, hi);
  sidecar << line << "shape " << height << 'x' << width << "\nmaxval 65535\n";
}

}  // namespace lskkf
