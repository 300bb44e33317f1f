#pragma once

// Binary field checkpoints.
//
// Layout: five text header lines
//   FBLAB1
//   n=<2|3>
//   shape=<n1,...>
//   origin=<x1,...>
//   h=<value>
// followed by row-major (last axis fastest) little-endian IEEE-754 doubles.  Scalar
// fields store one value per node; matrix fields store the upper triangle of each
// nodal matrix in row order.  The payload size tells the two kinds apart.

#include <cstddef>
#include <filesystem>
#include <string>

#include "fblab/fields.hpp"

namespace fblab {

struct FieldHeader {
  int dim = 2;
  Index3 shape{1, 1, 1};
  Point origin;
  double spacing = 0.0;
  /// 1 for scalar fields, n(n+1)/2 for matrix fields.
  int components = 1;

  Grid grid() const { return Grid(dim, origin, spacing, shape); }
};

/// Shortest decimal representation that reads back to the same double.
std::string format_double(double x);

void save_field(const std::filesystem::path& path, const ScalarField& f);
void save_field(const std::filesystem::path& path, const CoefficientField& A);

FieldHeader read_field_header(const std::filesystem::path& path);

ScalarField load_scalar_field(const std::filesystem::path& path);

/// Ellipticity bounds are recomputed from the stored matrices.
CoefficientField load_coefficient_field(const std::filesystem::path& path, double hoelder_exponent,
                                        double hoelder_seminorm);

}  // namespace fblab
