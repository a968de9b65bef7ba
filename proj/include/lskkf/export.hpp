#pragma once

#include <string>

#include "lskkf/field.hpp"

namespace lskkf {

/// 2-D (or lower) section of a field with `axis` fixed at `index`; the
/// remaining axes keep their order and spacing.
ScalarField slice_field(const ScalarField& field, int axis, Index index);

/// Binary 16-bit PGM (P5, big-endian samples, maxval 65535) mapping
/// [min, max] linearly onto [0, 65535]; a constant field maps to all zeros.
/// The mapping and shape are recorded in a sidecar `<path>.txt`. Fields must
/// be 1-D or 2-D; slice 3-D fields first.
void write_pgm16(const ScalarField& field, const std::string& path);

}  // namespace lskkf
