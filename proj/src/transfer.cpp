#include "t2fe/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "t2fe/format.hpp"
#include "t2fe/parallel.hpp"

namespace t2fe {

std::string to_string(FieldUnit unit) {
  switch (unit) {
    case FieldUnit::milliseconds: return "ms";
    case FieldUnit::pascal: return "Pa";
    case FieldUnit::dimensionless: return "dimensionless";
  }
  return "dimensionless";
}

std::string to_string(FieldMethod method) {
  switch (method) {
    case FieldMethod::nearest_neighbor: return "nearest-neighbor";
    case FieldMethod::volume_weighted: return "volume-weighted";
    case FieldMethod::derived: return "derived";
  }
  return "derived";
}

FieldMethod field_method_from_string(const std::string& text) {
  if (text == "nearest-neighbor") return FieldMethod::nearest_neighbor;
  if (text == "volume-weighted") return FieldMethod::volume_weighted;
  if (text == "derived") return FieldMethod::derived;
  throw InputError("unknown field method '" + text + "'");
}

ElementField ElementField::derived_from(std::vector<double> values, FieldUnit unit) {
  ElementField f;
  f.coverage.assign(values.size(), 1.0);
  f.values = std::move(values);
  f.unit = unit;
  f.method = FieldMethod::derived;
  return f;
}

void ElementField::validate(std::size_t element_count) const {
  if (values.size() != element_count || coverage.size() != element_count)
    throw InputError("element field has " + std::to_string(values.size()) + " entries, mesh has " +
                     std::to_string(element_count) + " elements");
  for (double c : coverage)
    if (!(c >= 0.0 && c <= 1.0)) throw InputError("element field coverage must lie in [0, 1]");
}

namespace {

void check_grid(const VoxelGrid& grid) {
  grid.validate();
  if (std::none_of(grid.values.begin(), grid.values.end(), is_valid_voxel))
    throw InputError("voxel grid has no valid voxels");
}

/// Linear indices of valid voxels, built on demand for the fallback search.
std::vector<std::size_t> valid_voxels(const VoxelGrid& grid) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (is_valid_voxel(grid.values[i])) out.push_back(i);
  return out;
}

double nearest_valid_value(const VoxelGrid& grid, const std::vector<std::size_t>& valid,
                           const Vec3& point) {
  const Vec3 c = continuous_index(grid, point);
  const std::size_t nx = static_cast<std::size_t>(grid.dims[0]);
  const std::size_t nxy = nx * static_cast<std::size_t>(grid.dims[1]);
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_id = valid.front();
  for (std::size_t id : valid) {
    const double di = (static_cast<double>(id % nx) - c[0]) * grid.spacing[0];
    const double dj = (static_cast<double>((id % nxy) / nx) - c[1]) * grid.spacing[1];
    const double dk = (static_cast<double>(id / nxy) - c[2]) * grid.spacing[2];
    const double d2 = di * di + dj * dj + dk * dk;
    if (d2 < best) {
      best = d2;
      best_id = id;
    }
  }
  return grid.values[best_id];
}

/// Direct nearest-neighbour lookup; false when the fallback search is needed.
bool direct_lookup(const VoxelGrid& grid, const Vec3& point, double& value) {
  const IndexLookup hit = world_to_index(grid, point);
  if (!hit.in_bounds) return false;
  value = grid.at(hit.index);
  return is_valid_voxel(value);
}

}  // namespace

ElementField assign_nearest_neighbor(const HexMesh& mesh, const VoxelGrid& grid, int jobs) {
  check_grid(grid);
  const std::size_t n = mesh.element_count();
  ElementField field;
  field.unit = FieldUnit::milliseconds;
  field.method = FieldMethod::nearest_neighbor;
  field.values.assign(n, 0.0);
  field.coverage.assign(n, 0.0);
  std::vector<unsigned char> missed(n, 0);
  parallel_for(n, jobs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t e = begin; e < end; ++e) {
      if (direct_lookup(grid, element_centroid(mesh, e), field.values[e]))
        field.coverage[e] = 1.0;
      else
        missed[e] = 1;
    }
  });
  std::vector<std::size_t> fallback;
  for (std::size_t e = 0; e < n; ++e)
    if (missed[e]) fallback.push_back(e);
  if (!fallback.empty()) {
    const std::vector<std::size_t> valid = valid_voxels(grid);
    parallel_for(fallback.size(), jobs, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t e = fallback[i];
        field.values[e] = nearest_valid_value(grid, valid, element_centroid(mesh, e));
      }
    });
  }
  field.warnings = fallback.size();
  return field;
}

namespace {

struct Tet {
  std::array<Vec3, 4> v;
  double sign;
};

/// Per-thread accumulation buffer over the element's index-space box.
struct OverlapScratch {
  Index3 lo{}, hi{};
  std::vector<double> volume;
  std::vector<std::uint8_t> classes;

  std::size_t extent(int a) const { return static_cast<std::size_t>(hi[a] - lo[a] + 1); }
  std::size_t local(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return (static_cast<std::size_t>(k - lo[2]) * extent(1) + static_cast<std::size_t>(j - lo[1])) *
               extent(0) +
           static_cast<std::size_t>(i - lo[0]);
  }
};

/// Index range [lo, hi] of voxels whose box can overlap [mn, mx] along one
/// axis, clipped to the grid. Returns false when empty.
bool axis_range(double mn, double mx, double h, std::int64_t n, std::int64_t& lo, std::int64_t& hi) {
  lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(mn / h + 0.5)));
  hi = std::min<std::int64_t>(n - 1, static_cast<std::int64_t>(std::floor(mx / h + 0.5)));
  return lo <= hi;
}

/// Accumulates the overlap volume of every voxel with the element whose
/// grid-frame corners are `q`. Returns false when the element misses the grid.
bool accumulate_overlaps(const hex8::Corners& q, const VoxelGrid& grid,
                         const simd::KernelTable& kernels, OverlapScratch& s) {
  const Vec3& h = grid.spacing;
  std::array<Tet, 6> tets;
  int n_tets = 0;
  Vec3 emin = q[0], emax = q[0];
  for (const Vec3& p : q) {
    emin = emin.cwiseMin(p);
    emax = emax.cwiseMax(p);
  }
  for (int a = 0; a < 3; ++a)
    if (!axis_range(emin[a], emax[a], h[a], grid.dims[a], s.lo[a], s.hi[a])) return false;

  for (const auto& t : clip::kHexTets) {
    Tet tet{{q[t[0]], q[t[1]], q[t[2]], q[t[3]]}, 1.0};
    const double v = clip::signed_tet_volume(tet.v[0], tet.v[1], tet.v[2], tet.v[3]);
    if (v == 0.0) continue;
    if (v < 0.0) {
      std::swap(tet.v[1], tet.v[2]);
      tet.sign = -1.0;
    }
    tets[n_tets++] = tet;
  }

  s.volume.assign(s.extent(0) * s.extent(1) * s.extent(2), 0.0);
  s.classes.resize(s.extent(0));
  const double voxel_volume = h[0] * h[1] * h[2];
  const Vec3 half = 0.5 * h;

  for (int ti = 0; ti < n_tets; ++ti) {
    const Tet& tet = tets[ti];
    const auto& v = tet.v;
    Vec3 tmin = v[0], tmax = v[0];
    for (int i = 1; i < 4; ++i) {
      tmin = tmin.cwiseMin(v[i]);
      tmax = tmax.cwiseMax(v[i]);
    }
    Index3 lo, hi;
    bool empty = false;
    for (int a = 0; a < 3; ++a) empty = empty || !axis_range(tmin[a], tmax[a], h[a], grid.dims[a], lo[a], hi[a]);
    if (empty) continue;

    simd::BoxRowClassify row{};
    const int faces[4][3] = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
    for (int p = 0; p < 4; ++p) {
      const Vec3& a = v[faces[p][0]];
      const Vec3 n = (v[faces[p][1]] - a).cross(v[faces[p][2]] - a);
      row.nx[p] = n[0];
      row.ny[p] = n[1];
      row.nz[p] = n[2];
      row.c[p] = n.dot(a);
      row.radius[p] = std::abs(n[0]) * half[0] + std::abs(n[1]) * half[1] + std::abs(n[2]) * half[2];
    }
    row.hx = h[0];
    row.x0 = static_cast<double>(lo[0]) * h[0];
    row.count = static_cast<std::size_t>(hi[0] - lo[0] + 1);
    row.out = s.classes.data();

    for (std::int64_t k = lo[2]; k <= hi[2]; ++k) {
      row.z = static_cast<double>(k) * h[2];
      for (std::int64_t j = lo[1]; j <= hi[1]; ++j) {
        row.y = static_cast<double>(j) * h[1];
        kernels.classify_box_row(row);
        double* dst = s.volume.data() + s.local(lo[0], j, k);
        for (std::size_t i = 0; i < row.count; ++i) {
          if (s.classes[i] == simd::kOutside) continue;
          if (s.classes[i] == simd::kInside) {
            dst[i] += tet.sign * voxel_volume;
            continue;
          }
          const Vec3 centre(row.x0 + static_cast<double>(i) * h[0], row.y, row.z);
          const std::array<Vec3, 4> local{v[0] - centre, v[1] - centre, v[2] - centre, v[3] - centre};
          dst[i] += tet.sign * clip::tet_box_overlap(local, -half, half);
        }
      }
    }
  }
  return true;
}

hex8::Corners grid_frame(const hex8::Corners& x, const VoxelGrid& grid) {
  hex8::Corners q;
  const Mat3 rt = grid.direction.transpose();
  for (int a = 0; a < 8; ++a) q[a] = rt * (x[a] - grid.origin);
  return q;
}

void check_element(const hex8::Corners& x) {
  const auto dets = corner_jacobians(x);
  if (std::any_of(dets.begin(), dets.end(), [](double d) { return !(d > 0.0); }))
    throw GeometryError("inverted hexahedron in overlap computation");
}

}  // namespace

std::vector<VoxelOverlap> element_overlaps(const hex8::Corners& corners, const VoxelGrid& grid,
                                           const simd::KernelTable& kernels) {
  grid.validate();
  check_element(corners);
  OverlapScratch s;
  std::vector<VoxelOverlap> out;
  if (!accumulate_overlaps(grid_frame(corners, grid), grid, kernels, s)) return out;
  for (std::int64_t k = s.lo[2]; k <= s.hi[2]; ++k)
    for (std::int64_t j = s.lo[1]; j <= s.hi[1]; ++j)
      for (std::int64_t i = s.lo[0]; i <= s.hi[0]; ++i) {
        const double v = s.volume[s.local(i, j, k)];
        if (v != 0.0) out.push_back({{i, j, k}, v});
      }
  return out;
}

ElementField assign_volume_weighted(const HexMesh& mesh, const VoxelGrid& grid,
                                    const TransferOptions& options,
                                    const simd::KernelTable& kernels) {
  check_grid(grid);
  if (!(options.coverage_floor >= 0.0 && options.coverage_floor <= 1.0))
    throw InputError("coverage floor must lie in [0, 1]");
  const std::size_t n = mesh.element_count();
  ElementField field;
  field.unit = FieldUnit::milliseconds;
  field.method = FieldMethod::volume_weighted;
  field.values.assign(n, 0.0);
  field.coverage.assign(n, 0.0);
  std::vector<unsigned char> missed(n, 0);

  parallel_for(n, options.jobs, [&](std::size_t begin, std::size_t end) {
    OverlapScratch s;
    for (std::size_t e = begin; e < end; ++e) {
      const hex8::Corners x = mesh.corners(e);
      try {
        check_element(x);
      } catch (const GeometryError&) {
        throw GeometryError("element " + std::to_string(e) + " has a nonpositive Jacobian");
      }
      const hex8::Corners q = grid_frame(x, grid);
      double sum_f = 0.0, sum_tf = 0.0;
      if (accumulate_overlaps(q, grid, kernels, s)) {
        const double element_vol = clip::tet_decomposition_volume(q);
        for (std::int64_t k = s.lo[2]; k <= s.hi[2]; ++k)
          for (std::int64_t j = s.lo[1]; j <= s.hi[1]; ++j)
            for (std::int64_t i = s.lo[0]; i <= s.hi[0]; ++i) {
              const double v = s.volume[s.local(i, j, k)];
              if (v == 0.0) continue;
              const double t2 = grid.values[grid.linear(i, j, k)];
              if (!is_valid_voxel(t2)) continue;
              const double f = v / element_vol;
              sum_f += f;
              sum_tf += t2 * f;
            }
      }
      field.coverage[e] = std::clamp(sum_f, 0.0, 1.0);
      if (sum_f > 0.0 && sum_f >= options.coverage_floor)
        field.values[e] = sum_tf / sum_f;
      else
        missed[e] = 1;
    }
  });

  std::vector<std::size_t> fallback;
  for (std::size_t e = 0; e < n; ++e)
    if (missed[e]) fallback.push_back(e);
  if (n > 0 && fallback.size() == n &&
      std::all_of(field.coverage.begin(), field.coverage.end(), [](double c) { return c == 0.0; }))
    throw InputError("no element overlaps a valid voxel; check the mesh/grid registration");
  if (!fallback.empty()) {
    std::vector<std::size_t> valid;
    for (std::size_t e : fallback) {
      const Vec3 c = element_centroid(mesh, e);
      if (direct_lookup(grid, c, field.values[e])) continue;
      if (valid.empty()) valid = valid_voxels(grid);
      field.values[e] = nearest_valid_value(grid, valid, c);
    }
  }
  field.warnings = fallback.size();
  return field;
}

TextureStats texture_stats(const HexMesh& mesh, const ElementField& field,
                           const std::vector<Part>& parts) {
  field.validate(mesh.element_count());
  auto selected = [&](std::size_t e) {
    return parts.empty() || std::find(parts.begin(), parts.end(), mesh.parts[e]) != parts.end();
  };
  const auto nbrs = face_neighbors(mesh);
  TextureStats out;
  double sum_abs = 0.0, sum_sq = 0.0;
  bool any_selected = false;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    if (!selected(e)) continue;
    any_selected = true;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t o : nbrs[e])
      if (selected(o)) {
        sum += field.values[o];
        ++count;
      }
    if (count == 0) continue;
    const double d = field.values[e] - sum / static_cast<double>(count);
    sum_abs += std::abs(d);
    sum_sq += d * d;
    ++out.count;
  }
  if (!any_selected) throw InputError("texture statistics: no elements in the selected parts");
  if (out.count == 0) throw InputError("texture statistics: no selected element has a neighbour");
  out.roughness = sum_abs / static_cast<double>(out.count);
  out.rms = std::sqrt(sum_sq / static_cast<double>(out.count));
  return out;
}

AgreementStats agreement(const ElementField& a, const ElementField& b) {
  if (a.size() != b.size())
    throw InputError("agreement: fields have different lengths (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  const std::size_t n = a.size();
  if (n < 3) throw InputError("agreement needs at least 3 paired values");
  const double nd = static_cast<double>(n);
  double mean_a = 0.0, mean_b = 0.0, mean_d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_a += a.values[i];
    mean_b += b.values[i];
    mean_d += a.values[i] - b.values[i];
  }
  mean_a /= nd;
  mean_b /= nd;
  mean_d /= nd;
  double ssd = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.values[i] - b.values[i] - mean_d;
    const double x = a.values[i] - mean_a, y = b.values[i] - mean_b;
    ssd += d * d;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  AgreementStats s;
  s.n = n;
  s.bias = mean_d;
  s.sd = std::sqrt(ssd / (nd - 1.0));
  s.loa_low = s.bias - 1.96 * s.sd;
  s.loa_high = s.bias + 1.96 * s.sd;
  s.r_squared = (sxx > 0.0 && syy > 0.0) ? (sxy * sxy) / (sxx * syy)
                                         : std::numeric_limits<double>::quiet_NaN();
  return s;
}

void write_element_field_csv(const std::filesystem::path& path, const ElementField& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "element_id,value,coverage,method\n";
  const std::string method = to_string(field.method);
  for (std::size_t e = 0; e < field.size(); ++e)
    out << e << ',' << format_number(field.values[e]) << ',' << format_number(field.coverage[e])
        << ',' << method << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

ElementField read_element_field_csv(const std::filesystem::path& path, FieldUnit unit) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open element field " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("element_id,value,coverage,method", 0) != 0)
    throw InputError(path.string() + ": missing header element_id,value,coverage,method");
  ElementField field;
  field.unit = unit;
  bool have_method = false;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, value, coverage, method;
    if (!std::getline(ss, id, ',') || !std::getline(ss, value, ',') ||
        !std::getline(ss, coverage, ',') || !std::getline(ss, method))
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected 4 columns");
    try {
      if (std::stoull(id) != field.values.size())
        throw InputError(path.string() + ":" + std::to_string(line_no) +
                         ": element ids must be 0..N-1 in order");
      field.values.push_back(std::stod(value));
      field.coverage.push_back(std::stod(coverage));
    } catch (const std::logic_error&) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
    const FieldMethod m = field_method_from_string(method);
    if (have_method && m != field.method)
      throw InputError(path.string() + ": mixed method tags");
    field.method = m;
    have_method = true;
  }
  field.validate(field.values.size());
  return field;
}

}  // namespace t2fe
