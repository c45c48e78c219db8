#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "msissa/rng.hpp"

namespace msissa {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Gridded covariate map. Row 0 is the northernmost row, matching the ESRI
/// ASCII layout; (x0, y0) is the lower-left corner of the grid.
struct Raster {
  int n_rows = 0;
  int n_cols = 0;
  double x0 = 0.0;
  double y0 = 0.0;
  double cell_size = 1.0;
  double nodata = -9999.0;
  std::vector<double> values;  // row-major, n_rows * n_cols

  Raster() = default;
  Raster(int rows, int cols, double cell = 1.0, double x_origin = 0.0, double y_origin = 0.0);

  double& at(int row, int col) { return values[static_cast<std::size_t>(row) * n_cols + col]; }
  double at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * n_cols + col];
  }
  Point cell_center(int row, int col) const;
  double x_max() const { return x0 + n_cols * cell_size; }
  double y_max() const { return y0 + n_rows * cell_size; }
  bool contains(Point p) const {
    return p.x >= x0 && p.x <= x_max() && p.y >= y0 && p.y <= y_max();
  }
  bool is_nodata(double v) const { return v == nodata; }
  void validate() const;
};

/// Exponential-covariance Gaussian random field on a regular grid.
struct GrfSpec {
  double sill = 1.0;    // sigma^2
  double range = 10.0;  // phi, in map units
  int n_rows = 200;
  int n_cols = 200;
  double cell_size = 1.0;

  void validate() const;
};

/// Zero-mean field with C(d) = sill * exp(-d / range) between cell centres,
/// drawn by circulant embedding on a padded torus. Throws NumericError when no
/// padding up to 8x the grid yields a non-negative embedding spectrum.
Raster simulate_grf(const GrfSpec& spec, Rng& rng);

/// Dense Cholesky route; limited to grids of at most 4096 cells.
Raster simulate_grf_cholesky(const GrfSpec& spec, Rng& rng);

/// Bilinear interpolation between the four surrounding cell centres. In the
/// half-cell band along the border the outermost centres are extended.
/// Throws ValidationError out of bounds or when a neighbour is nodata.
double covariate_at(const Raster& raster, Point p);

/// Same as covariate_at without bounds or nodata checks.
double interpolate(const Raster& raster, Point p);

/// ESRI ASCII grid reader/writer.
Raster read_raster(const std::filesystem::path& path);
void write_raster(const Raster& raster, const std::filesystem::path& path);

struct RasterSummary {
  double mean = 0.0;
  double variance = 0.0;
  double lag1_correlation = 0.0;  // horizontal neighbours
  double min = 0.0;
  double max = 0.0;
};
RasterSummary summarize(const Raster& raster);

/// Named habitat covariate layers sharing one grid geometry.
struct Habitat {
  std::vector<std::string> names;
  std::vector<Raster> layers;

  Habitat() = default;
  Habitat(std::string name, Raster layer);

  std::size_t size() const { return layers.size(); }
  const Raster& geometry() const { return layers.front(); }
  bool contains(Point p) const { return !layers.empty() && geometry().contains(p); }
  /// Writes Z(p) into `out`; checked.
  void values_at(Point p, std::span<double> out) const;
  /// max over cells of sum_j beta_j Z_j; bounds beta'Z at any interpolated point.
  double max_linear(std::span<const double> beta) const;
  void validate() const;
};

}  // namespace msissa
