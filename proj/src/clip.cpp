#include "t2fe/clip.hpp"

#include <algorithm>
#include <cmath>

#include "t2fe/mesh.hpp"

namespace t2fe::clip {

double ConvexPolyhedron::volume(const Vec3& ref) const {
  double six_v = 0.0;
  for (int f = 0; f < nf; ++f) {
    const Polygon& p = faces[f];
    const Vec3 v0 = p.v[0] - ref;
    for (int i = 1; i + 1 < p.n; ++i) six_v += v0.dot((p.v[i] - ref).cross(p.v[i + 1] - ref));
  }
  return six_v / 6.0;
}

double signed_tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

ConvexPolyhedron make_tetrahedron(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  ConvexPolyhedron p;
  auto tri = [&](const Vec3& x, const Vec3& y, const Vec3& z) {
    Polygon& f = p.faces[p.nf++];
    f.v[0] = x;
    f.v[1] = y;
    f.v[2] = z;
    f.n = 3;
  };
  tri(a, c, b);
  tri(a, b, d);
  tri(a, d, c);
  tri(b, c, d);
  return p;
}

namespace {

inline double side(const Vec3& p, int axis, double value, bool keep_below) {
  return keep_below ? p[axis] - value : value - p[axis];
}

inline Vec3 crossing(const Vec3& in, double s_in, const Vec3& out, double s_out, int axis,
                     double value) {
  const double t = s_in / (s_in - s_out);
  Vec3 p = in + t * (out - in);
  p[axis] = value;
  return p;
}

inline bool lex_less(const Vec3& a, const Vec3& b) {
  if (a[0] != b[0]) return a[0] < b[0];
  if (a[1] != b[1]) return a[1] < b[1];
  return a[2] < b[2];
}

}  // namespace

ClipResult clip_axis(const ConvexPolyhedron& in, int axis, double value, bool keep_below,
                     ConvexPolyhedron& out) {
  bool any_out = false, any_in = false;
  for (int f = 0; f < in.nf; ++f)
    for (int i = 0; i < in.faces[f].n; ++i) {
      const double s = side(in.faces[f].v[i], axis, value, keep_below);
      any_out = any_out || s > 0.0;
      any_in = any_in || s < 0.0;
    }
  if (!any_out) return ClipResult::unchanged;
  if (!any_in) return ClipResult::empty;

  std::array<Vec3, 2 * kMaxFaces * 2> cap;
  int n_cap = 0;
  out.nf = 0;
  for (int f = 0; f < in.nf; ++f) {
    const Polygon& src = in.faces[f];
    Polygon& dst = out.faces[out.nf];
    dst.n = 0;
    for (int i = 0; i < src.n; ++i) {
      const Vec3& a = src.v[i];
      const Vec3& b = src.v[(i + 1) % src.n];
      const double sa = side(a, axis, value, keep_below);
      const double sb = side(b, axis, value, keep_below);
      if (sa <= 0.0) {
        dst.v[dst.n++] = a;
        if (sa == 0.0) cap[n_cap++] = a;
      }
      if ((sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0)) {
        const Vec3 p = sa < 0.0 ? crossing(a, sa, b, sb, axis, value) : crossing(b, sb, a, sa, axis, value);
        dst.v[dst.n++] = p;
        cap[n_cap++] = p;
      }
    }
    if (dst.n >= 3) ++out.nf;
  }

  std::sort(cap.begin(), cap.begin() + n_cap, lex_less);
  n_cap = static_cast<int>(std::unique(cap.begin(), cap.begin() + n_cap) - cap.begin());
  if (n_cap >= 3) {
    if (n_cap > kMaxPolygonVertices || out.nf >= kMaxFaces)
      throw Error("polyhedron clipping exceeded its fixed capacity");
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    double cu = 0.0, cv = 0.0;
    for (int i = 0; i < n_cap; ++i) {
      cu += cap[i][u];
      cv += cap[i][v];
    }
    cu /= n_cap;
    cv /= n_cap;
    std::array<std::pair<double, int>, 2 * kMaxFaces * 2> order;
    for (int i = 0; i < n_cap; ++i) order[i] = {std::atan2(cap[i][v] - cv, cap[i][u] - cu), i};
    std::sort(order.begin(), order.begin() + n_cap);
    // Counterclockwise in (u, v) faces +axis; the cap faces the removed side.
    Polygon& face = out.faces[out.nf++];
    face.n = n_cap;
    for (int i = 0; i < n_cap; ++i) {
      const int src = keep_below ? order[i].second : order[n_cap - 1 - i].second;
      face.v[i] = cap[src];
    }
  }
  return ClipResult::clipped;
}

double tet_box_overlap(const std::array<Vec3, 4>& tet, const Vec3& lo, const Vec3& hi) {
  Vec3 tmin = tet[0], tmax = tet[0];
  for (int i = 1; i < 4; ++i) {
    tmin = tmin.cwiseMin(tet[i]);
    tmax = tmax.cwiseMax(tet[i]);
  }
  for (int a = 0; a < 3; ++a)
    if (tmax[a] <= lo[a] || tmin[a] >= hi[a]) return 0.0;
  if ((tmin.array() >= lo.array()).all() && (tmax.array() <= hi.array()).all())
    return signed_tet_volume(tet[0], tet[1], tet[2], tet[3]);

  ConvexPolyhedron buf[2];
  buf[0] = make_tetrahedron(tet[0], tet[1], tet[2], tet[3]);
  int cur = 0;
  for (int a = 0; a < 3; ++a) {
    for (int s = 0; s < 2; ++s) {
      const bool keep_below = s == 1;
      const double value = keep_below ? hi[a] : lo[a];
      switch (clip_axis(buf[cur], a, value, keep_below, buf[1 - cur])) {
        case ClipResult::empty: return 0.0;
        case ClipResult::clipped: cur = 1 - cur; break;
        case ClipResult::unchanged: break;
      }
    }
  }
  return buf[cur].volume(0.5 * (lo + hi));
}

double tet_decomposition_volume(const hex8::Corners& x) {
  double v = 0.0;
  for (const auto& t : kHexTets) v += signed_tet_volume(x[t[0]], x[t[1]], x[t[2]], x[t[3]]);
  return v;
}

double hex_box_overlap_volume(const hex8::Corners& x, const Vec3& lo, const Vec3& hi) {
  const auto dets = corner_jacobians(x);
  if (std::any_of(dets.begin(), dets.end(), [](double d) { return !(d > 0.0); }))
    throw GeometryError("inverted hexahedron in overlap computation");
  double total = 0.0;
  for (const auto& t : kHexTets) {
    std::array<Vec3, 4> tet{x[t[0]], x[t[1]], x[t[2]], x[t[3]]};
    double sign = 1.0;
    if (signed_tet_volume(tet[0], tet[1], tet[2], tet[3]) < 0.0) {
      std::swap(tet[1], tet[2]);
      sign = -1.0;
    }
    total += sign * tet_box_overlap(tet, lo, hi);
  }
  return total;
}

}  // namespace t2fe::clip
