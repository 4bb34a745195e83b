#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "hlab/errors.hpp"
#include "hlab/linalg.hpp"

namespace hlab {

/// Uniform tensor grid on [-L,L]^d x [t0,t1].  Node spacing is identical on
/// every axis; the node count per axis is odd so the spatial origin is a node.
struct SpaceTimeGrid {
  int dim = 1;
  int nodes_per_axis = 3;  // M, odd, >= 3
  double half_width = 1.0; // L
  double t0 = 0.0;
  double t1 = 1.0;
  int time_steps = 1;      // intervals; slice count is time_steps + 1

  void validate() const {
    if (dim < 1 || dim > 2) throw ArgumentError("grid dimension must be 1 or 2");
    if (nodes_per_axis < 3 || nodes_per_axis % 2 == 0)
      throw ArgumentError("nodes per axis must be odd and >= 3");
    if (!(half_width > 0.0)) throw ArgumentError("grid half-width must be positive");
    if (!(t1 > t0)) throw ArgumentError("grid needs t1 > t0");
    if (time_steps < 1) throw ArgumentError("grid needs at least one time step");
  }

  double mesh() const { return 2.0 * half_width / (nodes_per_axis - 1); }
  double dt() const { return (t1 - t0) / time_steps; }
  int slice_count() const { return time_steps + 1; }
  double slice_time(int j) const { return t0 + j * dt(); }

  std::size_t node_count() const {
    std::size_t m = static_cast<std::size_t>(nodes_per_axis);
    return dim == 1 ? m : m * m;
  }

  double coord(int i) const { return -half_width + i * mesh(); }

  // Flattened node index; for d = 2 the second axis varies fastest.
  std::size_t node_index(int i1, int i2 = 0) const {
    return dim == 1 ? static_cast<std::size_t>(i1)
                    : static_cast<std::size_t>(i1) * nodes_per_axis + i2;
  }

  Vec node_point(std::size_t n) const {
    Vec x(dim);
    if (dim == 1) {
      x[0] = coord(static_cast<int>(n));
    } else {
      x[0] = coord(static_cast<int>(n) / nodes_per_axis);
      x[1] = coord(static_cast<int>(n) % nodes_per_axis);
    }
    return x;
  }
};

/// Vector-valued function sampled on a SpaceTimeGrid.
///
/// Values interpolate multilinearly in space and linearly in time; queries
/// outside the box clamp to it (constant extension).  First and second
/// derivative tables are built once by finalize(): central differences in the
/// interior, second-order one-sided stencils at the boundary, and mixed
/// second derivatives as the first-derivative stencil applied to the gradient
/// table.  Derivative queries interpolate those nodal tables.
class GridFunction {
 public:
  GridFunction(SpaceTimeGrid grid, int ncomp) : grid_(grid), ncomp_(ncomp) {
    grid_.validate();
    if (ncomp < 1 || ncomp > max_dim)
      throw ArgumentError("component count must be 1..3");
    values_.assign(static_cast<std::size_t>(grid_.slice_count()),
                   std::vector<double>(grid_.node_count() * ncomp_, 0.0));
  }

  const SpaceTimeGrid& grid() const { return grid_; }
  int ncomp() const { return ncomp_; }

  double& at(int slice, std::size_t node, int comp) {
    finalized_ = false;
    return values_[slice][node * ncomp_ + comp];
  }
  double at(int slice, std::size_t node, int comp) const {
    return values_[slice][node * ncomp_ + comp];
  }

  std::vector<double>& slice_data(int slice) {
    finalized_ = false;
    return values_[slice];
  }
  const std::vector<double>& slice_data(int slice) const { return values_[slice]; }

  /// Fill all slices from (t, x) |-> Vec.
  template <class F>
  void fill(F&& f) {
    for (int j = 0; j < grid_.slice_count(); ++j) {
      double t = grid_.slice_time(j);
      for (std::size_t n = 0; n < grid_.node_count(); ++n) {
        Vec v = f(t, grid_.node_point(n));
        for (int c = 0; c < ncomp_; ++c) values_[j][n * ncomp_ + c] = v[c];
      }
    }
    finalized_ = false;
  }

  /// Build the nodal derivative tables.  Must be called after the values are
  /// complete and before any derivative query; value() works without it.
  void finalize() {
    const int nslices = grid_.slice_count();
    grad_.assign(nslices, {});
    hess_.assign(nslices, {});
    for (int j = 0; j < nslices; ++j) {
      build_gradient_table(j);
      build_hessian_table(j);
    }
    finalized_ = true;
  }

  bool finalized() const { return finalized_; }

  Vec value(double t, const Vec& x) const {
    Vec out(ncomp_);
    interpolate(values_, ncomp_, t, x, out.data());
    return out;
  }

  /// ncomp x d Jacobian from the nodal gradient tables.
  Mat jacobian(double t, const Vec& x) const {
    require_finalized();
    const int d = grid_.dim;
    Eigen::Matrix<double, Eigen::Dynamic, 1, 0, max_dim * max_dim, 1> buf(ncomp_ * d);
    interpolate(grad_, ncomp_ * d, t, x, buf.data());
    Mat out(ncomp_, d);
    for (int c = 0; c < ncomp_; ++c)
      for (int k = 0; k < d; ++k) out(c, k) = buf[c * d + k];
    return out;
  }

  /// d x d Hessian of one component from the nodal second-derivative tables.
  Mat hessian(double t, const Vec& x, int comp) const {
    require_finalized();
    if (comp < 0 || comp >= ncomp_) throw ArgumentError("component out of range");
    const int d = grid_.dim;
    Eigen::Matrix<double, Eigen::Dynamic, 1, 0, max_dim * max_dim * max_dim, 1>
        buf(ncomp_ * d * d);
    interpolate(hess_, ncomp_ * d * d, t, x, buf.data());
    Mat out(d, d);
    for (int k = 0; k < d; ++k)
      for (int l = 0; l < d; ++l) out(k, l) = buf[(comp * d + k) * d + l];
    return out;
  }

  double sup_abs() const {
    double s = 0.0;
    for (const auto& sl : values_)
      for (double v : sl) s = std::max(s, std::abs(v));
    return s;
  }

  /// sup over nodes and slices of the Jacobian Hilbert-Schmidt norm.
  double sup_jacobian_hs() const {
    require_finalized();
    const int d = grid_.dim;
    double s = 0.0;
    for (const auto& sl : grad_) {
      for (std::size_t n = 0; n < grid_.node_count(); ++n) {
        double q = 0.0;
        for (int ck = 0; ck < ncomp_ * d; ++ck) {
          double g = sl[n * ncomp_ * d + ck];
          q += g * g;
        }
        s = std::max(s, q);
      }
    }
    return std::sqrt(s);
  }

  /// sup over nodes and slices of the full second-derivative tensor norm
  /// (Frobenius over components and both derivative indices).
  double sup_hessian_hs() const {
    require_finalized();
    const int d = grid_.dim;
    double s = 0.0;
    for (const auto& sl : hess_) {
      for (std::size_t n = 0; n < grid_.node_count(); ++n) {
        double q = 0.0;
        for (int ck = 0; ck < ncomp_ * d * d; ++ck) {
          double h = sl[n * ncomp_ * d * d + ck];
          q += h * h;
        }
        s = std::max(s, q);
      }
    }
    return std::sqrt(s);
  }

  // -------------------------------------------------------------------------
  // Serialization: magic, version, dim, M, L, t0, t1, slice count, component
  // count, then slice data as raw little-endian float64 in node-major order.

  void save_binary(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    const char magic[4] = {'H', 'L', 'G', 'F'};
    os.write(magic, 4);
    write_u32(os, 1u);
    write_u32(os, static_cast<std::uint32_t>(grid_.dim));
    write_u32(os, static_cast<std::uint32_t>(grid_.nodes_per_axis));
    write_f64(os, grid_.half_width);
    write_f64(os, grid_.t0);
    write_f64(os, grid_.t1);
    write_u32(os, static_cast<std::uint32_t>(grid_.slice_count()));
    write_u32(os, static_cast<std::uint32_t>(ncomp_));
    for (const auto& sl : values_)
      os.write(reinterpret_cast<const char*>(sl.data()),
               static_cast<std::streamsize>(sl.size() * sizeof(double)));
    if (!os) throw IoError("write failed: " + path);
  }

  static GridFunction load_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "HLGF", 4) != 0)
      throw IoError("not a grid-function file: " + path);
    std::uint32_t version = read_u32(is);
    if (version != 1u) throw IoError("unsupported grid-function version");
    SpaceTimeGrid g;
    g.dim = static_cast<int>(read_u32(is));
    g.nodes_per_axis = static_cast<int>(read_u32(is));
    g.half_width = read_f64(is);
    g.t0 = read_f64(is);
    g.t1 = read_f64(is);
    std::uint32_t nslices = read_u32(is);
    std::uint32_t ncomp = read_u32(is);
    if (nslices < 2) throw IoError("grid-function file needs >= 2 slices");
    g.time_steps = static_cast<int>(nslices) - 1;
    GridFunction f(g, static_cast<int>(ncomp));
    for (std::uint32_t j = 0; j < nslices; ++j) {
      auto& sl = f.values_[j];
      is.read(reinterpret_cast<char*>(sl.data()),
              static_cast<std::streamsize>(sl.size() * sizeof(double)));
    }
    if (!is) throw IoError("truncated grid-function file: " + path);
    f.finalize();
    return f;
  }

  void save_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "t";
    for (int k = 0; k < grid_.dim; ++k) os << ",x" << (k + 1);
    for (int c = 0; c < ncomp_; ++c) os << ",u" << (c + 1);
    os << "\n";
    os.precision(17);
    for (int j = 0; j < grid_.slice_count(); ++j) {
      double t = grid_.slice_time(j);
      for (std::size_t n = 0; n < grid_.node_count(); ++n) {
        Vec x = grid_.node_point(n);
        os << t;
        for (int k = 0; k < grid_.dim; ++k) os << "," << x[k];
        for (int c = 0; c < ncomp_; ++c) os << "," << values_[j][n * ncomp_ + c];
        os << "\n";
      }
    }
    if (!os) throw IoError("write failed: " + path);
  }

 private:
  static void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  static void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  static std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  static double read_f64(std::istream& is) {
    double v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }

  void require_finalized() const {
    if (!finalized_)
      throw PreconditionError("derivative tables not built; call finalize()");
  }

  // Nodal value of component block `width` starting at node n in table row.
  void build_gradient_table(int j) {
    const int d = grid_.dim;
    const int M = grid_.nodes_per_axis;
    const double h = grid_.mesh();
    auto& g = grad_[j];
    g.assign(grid_.node_count() * ncomp_ * d, 0.0);
    const auto& v = values_[j];
    auto val = [&](int i1, int i2, int c) {
      return v[grid_.node_index(i1, i2) * ncomp_ + c];
    };
    auto d_axis = [&](int i, auto&& get) {
      if (i == 0) return (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h);
      if (i == M - 1)
        return (3.0 * get(M - 1) - 4.0 * get(M - 2) + get(M - 3)) / (2.0 * h);
      return (get(i + 1) - get(i - 1)) / (2.0 * h);
    };
    for (std::size_t n = 0; n < grid_.node_count(); ++n) {
      int i1 = d == 1 ? static_cast<int>(n) : static_cast<int>(n) / M;
      int i2 = d == 1 ? 0 : static_cast<int>(n) % M;
      for (int c = 0; c < ncomp_; ++c) {
        g[(n * ncomp_ + c) * d + 0] =
            d_axis(i1, [&](int i) { return val(i, i2, c); });
        if (d == 2)
          g[(n * ncomp_ + c) * d + 1] =
              d_axis(i2, [&](int i) { return val(i1, i, c); });
      }
    }
  }

  void build_hessian_table(int j) {
    const int d = grid_.dim;
    const int M = grid_.nodes_per_axis;
    const double h = grid_.mesh();
    auto& hs = hess_[j];
    hs.assign(grid_.node_count() * ncomp_ * d * d, 0.0);
    const auto& v = values_[j];
    const auto& g = grad_[j];
    auto val = [&](int i1, int i2, int c) {
      return v[grid_.node_index(i1, i2) * ncomp_ + c];
    };
    auto grad_entry = [&](int i1, int i2, int c, int k) {
      return g[(grid_.node_index(i1, i2) * ncomp_ + c) * d + k];
    };
    auto d2_axis = [&](int i, auto&& get) {
      int c = std::clamp(i, 1, M - 2);  // one-sided copy at the boundary
      return (get(c + 1) - 2.0 * get(c) + get(c - 1)) / (h * h);
    };
    auto d_axis = [&](int i, auto&& get) {
      if (i == 0) return (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h);
      if (i == M - 1)
        return (3.0 * get(M - 1) - 4.0 * get(M - 2) + get(M - 3)) / (2.0 * h);
      return (get(i + 1) - get(i - 1)) / (2.0 * h);
    };
    for (std::size_t n = 0; n < grid_.node_count(); ++n) {
      int i1 = d == 1 ? static_cast<int>(n) : static_cast<int>(n) / M;
      int i2 = d == 1 ? 0 : static_cast<int>(n) % M;
      for (int c = 0; c < ncomp_; ++c) {
        double* block = &hs[(n * ncomp_ + c) * d * d];
        block[0] = d2_axis(i1, [&](int i) { return val(i, i2, c); });
        if (d == 2) {
          block[3] = d2_axis(i2, [&](int i) { return val(i1, i, c); });
          // Mixed derivative: axis-2 difference of the axis-1 gradient table.
          double m = d_axis(i2, [&](int i) { return grad_entry(i1, i, c, 0); });
          block[1] = m;
          block[2] = m;
        }
      }
    }
  }

  // Multilinear space / linear time interpolation of a nodal table with
  // `width` doubles per node.
  void interpolate(const std::vector<std::vector<double>>& table, int width,
                   double t, const Vec& x, double* out) const {
    const int d = grid_.dim;
    const int M = grid_.nodes_per_axis;
    const double h = grid_.mesh();
    double tc = std::clamp(t, grid_.t0, grid_.t1);
    double u = (tc - grid_.t0) / grid_.dt();
    int j0 = std::min(static_cast<int>(u), grid_.time_steps - 1);
    double wt = std::clamp(u - j0, 0.0, 1.0);

    int i0[2] = {0, 0};
    double wx[2] = {0.0, 0.0};
    for (int k = 0; k < d; ++k) {
      double xc = std::clamp(x[k], -grid_.half_width, grid_.half_width);
      double p = (xc + grid_.half_width) / h;
      int i = std::min(static_cast<int>(p), M - 2);
      i0[k] = i;
      wx[k] = std::clamp(p - i, 0.0, 1.0);
    }

    auto gather = [&](int j, double* acc) {
      const auto& tb = table[j];
      if (d == 1) {
        std::size_t a = grid_.node_index(i0[0]) * width;
        std::size_t b = grid_.node_index(i0[0] + 1) * width;
        for (int c = 0; c < width; ++c)
          acc[c] = (1.0 - wx[0]) * tb[a + c] + wx[0] * tb[b + c];
      } else {
        double w00 = (1.0 - wx[0]) * (1.0 - wx[1]);
        double w01 = (1.0 - wx[0]) * wx[1];
        double w10 = wx[0] * (1.0 - wx[1]);
        double w11 = wx[0] * wx[1];
        std::size_t n00 = grid_.node_index(i0[0], i0[1]) * width;
        std::size_t n01 = grid_.node_index(i0[0], i0[1] + 1) * width;
        std::size_t n10 = grid_.node_index(i0[0] + 1, i0[1]) * width;
        std::size_t n11 = grid_.node_index(i0[0] + 1, i0[1] + 1) * width;
        for (int c = 0; c < width; ++c)
          acc[c] = w00 * tb[n00 + c] + w01 * tb[n01 + c] + w10 * tb[n10 + c] +
                   w11 * tb[n11 + c];
      }
    };

    double lo[max_dim * max_dim * max_dim];
    double hi[max_dim * max_dim * max_dim];
    gather(j0, lo);
    gather(j0 + 1, hi);
    for (int c = 0; c < width; ++c)
      out[c] = (1.0 - wt) * lo[c] + wt * hi[c];
  }

  SpaceTimeGrid grid_;
  int ncomp_;
  std::vector<std::vector<double>> values_;
  std::vector<std::vector<double>> grad_;
  std::vector<std::vector<double>> hess_;
  bool finalized_ = false;
};

/// Gradient and Hessian of one component at an interior space-time point.
inline std::pair<Vec, Mat> gradient_and_hessian(const GridFunction& u, double t,
                                                const Vec& x, int comp = 0) {
  const auto& g = u.grid();
  if (t < g.t0 || t > g.t1)
    throw DomainError("time outside the grid interval");
  for (int k = 0; k < g.dim; ++k)
    if (std::abs(x[k]) >= g.half_width)
      throw DomainError("point is not interior to the grid box");
  Mat jac = u.jacobian(t, x);
  Vec grad(g.dim);
  for (int k = 0; k < g.dim; ++k) grad[k] = jac(comp, k);
  return {grad, u.hessian(t, x, comp)};
}

}  // namespace hlab
