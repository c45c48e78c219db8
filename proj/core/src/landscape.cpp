#include "msissa/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "msissa/error.hpp"

namespace msissa {

Raster::Raster(int rows, int cols, double cell, double x_origin, double y_origin)
    : n_rows(rows), n_cols(cols), x0(x_origin), y0(y_origin), cell_size(cell) {
  if (rows <= 0 || cols <= 0) throw ValidationError("raster dimensions must be positive");
  values.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Point Raster::cell_center(int row, int col) const {
  return {x0 + (col + 0.5) * cell_size, y0 + (n_rows - row - 0.5) * cell_size};
}

void Raster::validate() const {
  if (n_rows <= 0 || n_cols <= 0) throw ValidationError("raster dimensions must be positive");
  if (!(cell_size > 0.0)) throw ValidationError("raster cell size must be positive");
  if (values.size() != static_cast<std::size_t>(n_rows) * n_cols)
    throw ValidationError("raster value count does not match its dimensions");
}

void GrfSpec::validate() const {
  if (!(sill > 0.0) || !std::isfinite(sill)) throw ValidationError("GRF sill must be positive");
  if (!(range > 0.0) || !std::isfinite(range)) throw ValidationError("GRF range must be positive");
  if (n_rows < 2 || n_cols < 2) throw ValidationError("GRF grid must be at least 2x2");
  if (!(cell_size > 0.0)) throw ValidationError("GRF cell size must be positive");
}

namespace {

using Complex = std::complex<double>;

void fft2(std::vector<Complex>& data, int rows, int cols, Eigen::FFT<double>& fft) {
  std::vector<Complex> in(static_cast<std::size_t>(std::max(rows, cols)));
  std::vector<Complex> out(in.size());
  for (int r = 0; r < rows; ++r) {
    in.assign(data.begin() + static_cast<std::ptrdiff_t>(r) * cols,
              data.begin() + static_cast<std::ptrdiff_t>(r + 1) * cols);
    fft.fwd(out, in);
    std::copy(out.begin(), out.end(), data.begin() + static_cast<std::ptrdiff_t>(r) * cols);
  }
  in.resize(rows);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) in[r] = data[static_cast<std::size_t>(r) * cols + c];
    fft.fwd(out, in);
    for (int r = 0; r < rows; ++r) data[static_cast<std::size_t>(r) * cols + c] = out[r];
  }
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

Raster simulate_grf(const GrfSpec& spec, Rng& rng) {
  spec.validate();
  Eigen::FFT<double> fft;
  const int base_rows = next_pow2(2 * (spec.n_rows - 1));
  const int base_cols = next_pow2(2 * (spec.n_cols - 1));

  for (int pad = 1; pad <= 8; pad *= 2) {
    const int m1 = base_rows * pad, m2 = base_cols * pad;
    std::vector<Complex> lambda(static_cast<std::size_t>(m1) * m2);
    for (int i = 0; i < m1; ++i) {
      const double dy = std::min(i, m1 - i) * spec.cell_size;
      for (int j = 0; j < m2; ++j) {
        const double dx = std::min(j, m2 - j) * spec.cell_size;
        lambda[static_cast<std::size_t>(i) * m2 + j] =
            spec.sill * std::exp(-std::hypot(dx, dy) / spec.range);
      }
    }
    fft2(lambda, m1, m2, fft);

    double max_eig = 0.0, min_eig = 0.0;
    for (const auto& l : lambda) {
      max_eig = std::max(max_eig, l.real());
      min_eig = std::min(min_eig, l.real());
    }
    if (min_eig < -1e-10 * max_eig) continue;

    const double scale = 1.0 / (static_cast<double>(m1) * m2);
    std::vector<Complex> field(lambda.size());
    for (std::size_t k = 0; k < lambda.size(); ++k) {
      const double amp = std::sqrt(std::max(lambda[k].real(), 0.0) * scale);
      const double re = rng.normal();
      const double im = rng.normal();
      field[k] = Complex(amp * re, amp * im);
    }
    fft2(field, m1, m2, fft);

    Raster out(spec.n_rows, spec.n_cols, spec.cell_size);
    for (int r = 0; r < spec.n_rows; ++r)
      for (int c = 0; c < spec.n_cols; ++c)
        out.at(r, c) = field[static_cast<std::size_t>(r) * m2 + c].real();
    return out;
  }
  throw NumericError(
      "circulant embedding is not positive semidefinite after maximum padding; "
      "use the dense Cholesky route for small grids");
}

Raster simulate_grf_cholesky(const GrfSpec& spec, Rng& rng) {
  spec.validate();
  const int n = spec.n_rows * spec.n_cols;
  if (n > 4096) throw ValidationError("dense Cholesky GRF is limited to 4096 cells");
  Raster out(spec.n_rows, spec.n_cols, spec.cell_size);
  Eigen::MatrixXd cov(n, n);
  for (int a = 0; a < n; ++a) {
    const Point pa = out.cell_center(a / spec.n_cols, a % spec.n_cols);
    for (int b = 0; b <= a; ++b) {
      const Point pb = out.cell_center(b / spec.n_cols, b % spec.n_cols);
      cov(a, b) = cov(b, a) = spec.sill * std::exp(-std::hypot(pa.x - pb.x, pa.y - pb.y) / spec.range);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("GRF covariance is not positive definite");
  Eigen::VectorXd z(n);
  for (int k = 0; k < n; ++k) z[k] = rng.normal();
  const Eigen::VectorXd y = llt.matrixL() * z;
  for (int k = 0; k < n; ++k) out.values[k] = y[k];
  return out;
}

double interpolate(const Raster& r, Point p) {
  // Continuous column/row coordinates of cell centres, rows counted from the top.
  double u = (p.x - r.x0) / r.cell_size - 0.5;
  double v = (r.y_max() - p.y) / r.cell_size - 0.5;
  u = std::clamp(u, 0.0, static_cast<double>(r.n_cols - 1));
  v = std::clamp(v, 0.0, static_cast<double>(r.n_rows - 1));
  int c0 = std::min(static_cast<int>(u), std::max(r.n_cols - 2, 0));
  int r0 = std::min(static_cast<int>(v), std::max(r.n_rows - 2, 0));
  const int c1 = std::min(c0 + 1, r.n_cols - 1);
  const int r1 = std::min(r0 + 1, r.n_rows - 1);
  const double fu = u - c0, fv = v - r0;
  const double top = (1.0 - fu) * r.at(r0, c0) + fu * r.at(r0, c1);
  const double bottom = (1.0 - fu) * r.at(r1, c0) + fu * r.at(r1, c1);
  return (1.0 - fv) * top + fv * bottom;
}

double covariate_at(const Raster& r, Point p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !r.contains(p))
    throw ValidationError("location (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                          ") is outside the raster");
  double u = std::clamp((p.x - r.x0) / r.cell_size - 0.5, 0.0, r.n_cols - 1.0);
  double v = std::clamp((r.y_max() - p.y) / r.cell_size - 0.5, 0.0, r.n_rows - 1.0);
  const int c0 = std::min(static_cast<int>(u), std::max(r.n_cols - 2, 0));
  const int r0 = std::min(static_cast<int>(v), std::max(r.n_rows - 2, 0));
  for (int dr = 0; dr <= 1; ++dr)
    for (int dc = 0; dc <= 1; ++dc)
      if (r.is_nodata(r.at(std::min(r0 + dr, r.n_rows - 1), std::min(c0 + dc, r.n_cols - 1))))
        throw ValidationError("nodata cell in the interpolation neighbourhood");
  return interpolate(r, p);
}

Raster read_raster(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open raster '" + path.string() + "'");

  Raster r;
  bool have_rows = false, have_cols = false, have_x = false, have_y = false, have_cell = false;
  bool x_center = false, y_center = false;
  std::string line;
  std::streampos data_start = in.tellg();
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) {
      data_start = in.tellg();
      continue;
    }
    std::string lower = key;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const bool is_key = std::isalpha(static_cast<unsigned char>(lower[0]));
    if (!is_key) break;
    double value;
    if (!(ls >> value)) throw SchemaError("malformed raster header line: '" + line + "'");
    if (lower == "ncols") { r.n_cols = static_cast<int>(value); have_cols = true; }
    else if (lower == "nrows") { r.n_rows = static_cast<int>(value); have_rows = true; }
    else if (lower == "xllcorner") { r.x0 = value; have_x = true; }
    else if (lower == "yllcorner") { r.y0 = value; have_y = true; }
    else if (lower == "xllcenter") { r.x0 = value; have_x = true; x_center = true; }
    else if (lower == "yllcenter") { r.y0 = value; have_y = true; y_center = true; }
    else if (lower == "cellsize") { r.cell_size = value; have_cell = true; }
    else if (lower == "nodata_value") { r.nodata = value; }
    else throw SchemaError("unknown raster header key '" + key + "'");
    data_start = in.tellg();
  }
  if (!have_rows || !have_cols || !have_x || !have_y || !have_cell)
    throw SchemaError("raster header is missing required keys");
  if (r.n_rows <= 0 || r.n_cols <= 0) throw SchemaError("raster header has non-positive dimensions");
  if (!(r.cell_size > 0.0)) throw SchemaError("raster header has non-positive cellsize");
  if (x_center) r.x0 -= 0.5 * r.cell_size;
  if (y_center) r.y0 -= 0.5 * r.cell_size;

  in.clear();
  in.seekg(data_start);
  r.values.reserve(static_cast<std::size_t>(r.n_rows) * r.n_cols);
  int row = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<double> vals;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw SchemaError("non-numeric raster value '" + tok + "' in data row " +
                          std::to_string(row + 1));
      }
    }
    if (vals.empty()) continue;
    if (static_cast<int>(vals.size()) != r.n_cols)
      throw SchemaError("raster data row " + std::to_string(row + 1) + " has " +
                        std::to_string(vals.size()) + " values, expected " +
                        std::to_string(r.n_cols));
    if (row >= r.n_rows) throw SchemaError("raster has more data rows than nrows");
    r.values.insert(r.values.end(), vals.begin(), vals.end());
    ++row;
  }
  if (row != r.n_rows)
    throw SchemaError("raster has " + std::to_string(row) + " data rows, expected " +
                      std::to_string(r.n_rows));
  return r;
}

void write_raster(const Raster& r, const std::filesystem::path& path) {
  r.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write raster '" + path.string() + "'");
  out << std::setprecision(17);
  out << "ncols " << r.n_cols << '\n'
      << "nrows " << r.n_rows << '\n'
      << "xllcorner " << r.x0 << '\n'
      << "yllcorner " << r.y0 << '\n'
      << "cellsize " << r.cell_size << '\n'
      << "NODATA_value " << r.nodata << '\n';
  for (int row = 0; row < r.n_rows; ++row) {
    for (int col = 0; col < r.n_cols; ++col) {
      if (col) out << ' ';
      out << r.at(row, col);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing raster '" + path.string() + "'");
}

RasterSummary summarize(const Raster& r) {
  RasterSummary s;
  std::size_t n = 0;
  double sum = 0.0;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -s.min;
  for (double v : r.values) {
    if (r.is_nodata(v)) continue;
    sum += v;
    ++n;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  if (n == 0) return s;
  s.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : r.values)
    if (!r.is_nodata(v)) ss += (v - s.mean) * (v - s.mean);
  s.variance = ss / static_cast<double>(n);

  double cross = 0.0;
  std::size_t pairs = 0;
  for (int row = 0; row < r.n_rows; ++row)
    for (int col = 0; col + 1 < r.n_cols; ++col) {
      const double a = r.at(row, col), b = r.at(row, col + 1);
      if (r.is_nodata(a) || r.is_nodata(b)) continue;
      cross += (a - s.mean) * (b - s.mean);
      ++pairs;
    }
  if (pairs > 0 && s.variance > 0.0) s.lag1_correlation = cross / pairs / s.variance;
  return s;
}

Habitat::Habitat(std::string name, Raster layer) {
  names.push_back(std::move(name));
  layers.push_back(std::move(layer));
}

void Habitat::values_at(Point p, std::span<double> out) const {
  for (std::size_t j = 0; j < layers.size(); ++j) out[j] = covariate_at(layers[j], p);
}

double Habitat::max_linear(std::span<const double> beta) const {
  const auto& g = geometry();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < g.values.size(); ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < layers.size(); ++j) s += beta[j] * layers[j].values[k];
    best = std::max(best, s);
  }
  return best;
}

void Habitat::validate() const {
  if (layers.empty()) throw ValidationError("habitat has no covariate layers");
  if (names.size() != layers.size()) throw ValidationError("habitat names and layers differ in count");
  const auto& g = geometry();
  g.validate();
  for (const auto& l : layers) {
    l.validate();
    if (l.n_rows != g.n_rows || l.n_cols != g.n_cols || l.x0 != g.x0 || l.y0 != g.y0 ||
        l.cell_size != g.cell_size)
      throw ValidationError("habitat layers must share one grid geometry");
  }
}

}  // namespace msissa
