#include "lskkf/field.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lskkf {

double Grid::cell_volume() const {
  double v = 1.0;
  for (int d = 0; d < dims; ++d) v *= spacing[static_cast<size_t>(d)];
  return v;
}

std::array<Index, 3> Grid::unflatten(Index flat) const {
  std::array<Index, 3> idx{0, 0, 0};
  idx[2] = flat % shape[2];
  flat /= shape[2];
  idx[1] = flat % shape[1];
  idx[0] = flat / shape[1];
  return idx;
}

Index Grid::flatten(const std::array<Index, 3>& idx) const {
  return (idx[0] * shape[1] + idx[1]) * shape[2] + idx[2];
}

std::array<double, 3> Grid::point(Index flat) const {
  const auto idx = unflatten(flat);
  return {static_cast<double>(idx[0]) * spacing[0], static_cast<double>(idx[1]) * spacing[1],
          static_cast<double>(idx[2]) * spacing[2]};
}

bool Grid::operator==(const Grid& o) const {
  return dims == o.dims && shape == o.shape && spacing == o.spacing;
}

void Grid::validate() const {
  if (dims < 1 || dims > 3) throw ShapeError("grid: dims must be 1, 2, or 3");
  for (int d = 0; d < 3; ++d) {
    const auto i = static_cast<size_t>(d);
    if (shape[i] < 1) throw ShapeError("grid: non-positive shape");
    if (!(spacing[i] > 0.0)) throw ShapeError("grid: spacing must be strictly positive");
    if (d >= dims && shape[i] != 1)
      throw ShapeError("grid: unused axes must have extent 1");
  }
}

Grid make_grid(const std::vector<Index>& shape, const std::vector<double>& spacing) {
  if (shape.empty() || shape.size() > 3 || shape.size() != spacing.size())
    throw ShapeError("grid: need 1-3 axes with matching shape/spacing lists");
  Grid g;
  g.dims = static_cast<int>(shape.size());
  for (size_t d = 0; d < shape.size(); ++d) {
    g.shape[d] = shape[d];
    g.spacing[d] = spacing[d];
  }
  g.validate();
  return g;
}

ScalarField::ScalarField(Grid g, Vector v) : grid(g), values(std::move(v)) {
  grid.validate();
  if (values.size() != grid.size())
    throw ShapeError("field: values.length " + std::to_string(values.size()) +
                     " != grid size " + std::to_string(grid.size()));
}

ScalarField constant_field(const Grid& grid, double value) {
  return {grid, Vector::Constant(grid.size(), value)};
}

MaskSet::MaskSet(std::vector<ScalarField> masks) : masks_(std::move(masks)) {
  if (masks_.empty()) throw ShapeError("mask set: at least one mask required");
  const Grid& g = masks_.front().grid;
  for (const auto& m : masks_) {
    if (!(m.grid == g)) throw ShapeError("mask set: masks on different grids");
    for (Index i = 0; i < m.values.size(); ++i) {
      const double v = m.values[i];
      if (v != 0.0 && v != 1.0)
        throw ShapeError("mask set: mask values must be exactly 0 or 1");
    }
  }
  for (size_t a = 0; a < masks_.size(); ++a)
    for (size_t b = a + 1; b < masks_.size(); ++b)
      if ((masks_[a].values.array() * masks_[b].values.array()).sum() != 0.0)
        throw ShapeError("mask set: masks " + std::to_string(a) + " and " +
                         std::to_string(b) + " overlap");
}

const Grid& MaskSet::grid() const {
  if (masks_.empty()) throw ShapeError("mask set: empty");
  return masks_.front().grid;
}

bool MaskSet::covering() const {
  if (masks_.empty()) return false;
  Vector total = Vector::Zero(grid().size());
  for (const auto& m : masks_) total += m.values;
  return (total.array() == 1.0).all();
}

int MaskSet::material_of(Index flat) const {
  for (size_t m = 0; m < masks_.size(); ++m)
    if (masks_[m].values[flat] == 1.0) return static_cast<int>(m);
  return -1;
}

std::vector<Index> MaskSet::indices_of(Index m) const {
  const auto& vals = mask(m).values;
  std::vector<Index> out;
  for (Index i = 0; i < vals.size(); ++i)
    if (vals[i] == 1.0) out.push_back(i);
  return out;
}

// ---- SF1 I/O ---------------------------------------------------------------

namespace {

std::uint64_t to_le_bits(double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, sizeof bits);
  if constexpr (std::endian::native == std::endian::big) {
    bits = __builtin_bswap64(bits);
  }
  return bits;
}

double from_le_bits(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::big) {
    bits = __builtin_bswap64(bits);
  }
  double x;
  std::memcpy(&x, &bits, sizeof x);
  return x;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void write_sf1(const ScalarField& field, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("sf1: cannot open for writing: " + path);
  std::ostringstream header;
  header << "SF1 " << field.grid.dims;
  for (int d = 0; d < field.grid.dims; ++d) header << ' ' << field.grid.shape[static_cast<size_t>(d)];
  for (int d = 0; d < field.grid.dims; ++d)
    header << ' ' << format_double(field.grid.spacing[static_cast<size_t>(d)]);
  header << '\n';
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (Index i = 0; i < field.values.size(); ++i) {
    const std::uint64_t bits = to_le_bits(field.values[i]);
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw std::runtime_error("sf1: write failed: " + path);
}

ScalarField read_sf1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("sf1: cannot open: " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("sf1: missing header: " + path);
  std::istringstream hs(header);
  std::string magic;
  int dims = 0;
  hs >> magic >> dims;
  if (magic != "SF1" || dims < 1 || dims > 3)
    throw std::runtime_error("sf1: bad header in " + path);
  std::vector<Index> shape(static_cast<size_t>(dims));
  std::vector<double> spacing(static_cast<size_t>(dims));
  for (auto& n : shape) hs >> n;
  for (auto& dx : spacing) hs >> dx;
  if (!hs) throw std::runtime_error("sf1: truncated header in " + path);
  const Grid grid = make_grid(shape, spacing);
  Vector values(grid.size());
  for (Index i = 0; i < values.size(); ++i) {
    std::uint64_t bits;
    in.read(reinterpret_cast<char*>(&bits), sizeof bits);
    if (!in) throw std::runtime_error("sf1: truncated data in " + path);
    values[i] = from_le_bits(bits);
  }
  return {grid, std::move(values)};
}

void write_sf1_csv(const ScalarField& field, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("sf1-csv: cannot open for writing: " + path);
  out << "# SF1-csv shape=";
  for (int d = 0; d < field.grid.dims; ++d) {
    if (d) out << 'x';
    out << field.grid.shape[static_cast<size_t>(d)];
  }
  out << '\n';
  for (Index i = 0; i < field.values.size(); ++i) out << format_double(field.values[i]) << '\n';
  if (!out) throw std::runtime_error("sf1-csv: write failed: " + path);
}

}  // namespace lskkf
