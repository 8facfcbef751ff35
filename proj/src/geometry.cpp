#include "sbf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sbf {

namespace {

double block_diameter(int rows, int cols, double spacing) {
  const double w = (cols - 1) * spacing;
  const double h = (rows - 1) * spacing;
  return std::sqrt(w * w + h * h);
}

double lower_bound_for(double diameter, double wavelength) {
  return 0.62 * std::sqrt(diameter * diameter * diameter / wavelength);
}

}  // namespace

void ArrayLayout::validate() const {
  if (module_rows < 1 || module_cols < 1 || sub_rows < 1 || sub_cols < 1)
    throw std::invalid_argument("array layout: all row/column counts must be >= 1");
  if (!(spacing > 0.0) || !std::isfinite(spacing))
    throw std::invalid_argument("array layout: spacing must be positive");
  if (std::abs(normal.norm() - 1.0) > 1e-9 || std::abs(row_axis.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("array layout: normal and row_axis must be unit vectors");
  if (std::abs(normal.dot(row_axis)) > 1e-9)
    throw std::invalid_argument("array layout: row_axis must be orthogonal to normal");
}

ArrayLayout make_layout(int module_rows, int module_cols, int sub_rows, int sub_cols, double spacing,
                        const Vec3& origin) {
  ArrayLayout layout;
  layout.module_rows = module_rows;
  layout.module_cols = module_cols;
  layout.sub_rows = sub_rows;
  layout.sub_cols = sub_cols;
  layout.spacing = spacing;
  layout.origin = origin;
  layout.validate();
  return layout;
}

const char* to_string(Zone zone) {
  switch (zone) {
    case Zone::NonRadiative:
      return "non-radiative";
    case Zone::Fresnel:
      return "fresnel";
    case Zone::FarField:
      return "far-field";
  }
  return "unknown";
}

Vec3 element_position(const ArrayLayout& layout, int n) {
  if (n < 0 || n >= layout.element_count())
    throw std::out_of_range("element index " + std::to_string(n) + " out of range [0, " +
                            std::to_string(layout.element_count()) + ")");
  const int per_module = layout.module_size();
  const int m = n / per_module;
  const int i = n % per_module;
  const int row = (m / layout.module_cols) * layout.sub_rows + i / layout.sub_cols;
  const int col = (m % layout.module_cols) * layout.sub_cols + i % layout.sub_cols;
  return layout.origin + layout.spacing * (col * layout.row_axis + row * layout.up_axis());
}

std::vector<int> module_slice(const ArrayLayout& layout, int m) {
  if (m < 0 || m >= layout.module_count())
    throw std::out_of_range("module index " + std::to_string(m) + " out of range [0, " +
                            std::to_string(layout.module_count()) + ")");
  std::vector<int> out(layout.module_size());
  for (int i = 0; i < layout.module_size(); ++i) out[i] = m * layout.module_size() + i;
  return out;
}

Vec3 aperture_center(const ArrayLayout& layout) {
  const double half_w = 0.5 * (layout.cols() - 1) * layout.spacing;
  const double half_h = 0.5 * (layout.rows() - 1) * layout.spacing;
  return layout.origin + half_w * layout.row_axis + half_h * layout.up_axis();
}

Vec3 module_center(const ArrayLayout& layout, int m) {
  if (m < 0 || m >= layout.module_count())
    throw std::out_of_range("module index " + std::to_string(m) + " out of range");
  const double col0 = (m % layout.module_cols) * layout.sub_cols;
  const double row0 = (m / layout.module_cols) * layout.sub_rows;
  const double col = col0 + 0.5 * (layout.sub_cols - 1);
  const double row = row0 + 0.5 * (layout.sub_rows - 1);
  return layout.origin + layout.spacing * (col * layout.row_axis + row * layout.up_axis());
}

double aperture_diameter(const ArrayLayout& layout) {
  return block_diameter(layout.rows(), layout.cols(), layout.spacing);
}

double module_diameter(const ArrayLayout& layout) {
  return block_diameter(layout.sub_rows, layout.sub_cols, layout.spacing);
}

FresnelBounds fresnel_bounds(double diameter, double wavelength) {
  if (!(diameter > 0.0) || !(wavelength > 0.0))
    throw std::invalid_argument("fresnel_bounds: diameter and wavelength must be positive");
  FresnelBounds b;
  b.lower = lower_bound_for(diameter, wavelength);
  b.upper = 2.0 * diameter * diameter / wavelength;
  b.sub_lower = b.lower;
  return b;
}

FresnelBounds fresnel_bounds(const ArrayLayout& layout, double wavelength) {
  FresnelBounds b = fresnel_bounds(aperture_diameter(layout), wavelength);
  // A single-element module has no extent; its lower bound degenerates to 0.
  const double d0 = module_diameter(layout);
  b.sub_lower = d0 > 0.0 ? lower_bound_for(d0, wavelength) : 0.0;
  return b;
}

Zone zone_classify(const Vec3& ue, const ArrayLayout& layout, const FresnelBounds& bounds) {
  const double d = (aperture_center(layout) - ue).norm();
  if (d < bounds.lower) return Zone::NonRadiative;
  if (d > bounds.upper) return Zone::FarField;
  return Zone::Fresnel;
}

bool subarray_constraint_ok(const Vec3& ue, int m, const ArrayLayout& layout,
                            const FresnelBounds& bounds) {
  const double d = (module_center(layout, m) - ue).norm();
  return d >= bounds.sub_lower && d <= bounds.upper;
}

std::vector<int> effective_module_set(const Vec3& ue, const ArrayLayout& layout, double wavelength) {
  const double dist = (aperture_center(layout) - ue).norm();
  const double full = lower_bound_for(aperture_diameter(layout), wavelength);
  std::vector<int> modules;
  if (dist >= full) {
    modules.resize(layout.module_count());
    for (int m = 0; m < layout.module_count(); ++m) modules[m] = m;
    return modules;
  }
  const int kmax = std::min(layout.module_rows, layout.module_cols);
  for (int k = kmax; k >= 1; --k) {
    const double dk = block_diameter(k * layout.sub_rows, k * layout.sub_cols, layout.spacing);
    if (lower_bound_for(dk, wavelength) > dist) continue;
    const int r0 = (layout.module_rows - k) / 2;
    const int c0 = (layout.module_cols - k) / 2;
    for (int r = r0; r < r0 + k; ++r)
      for (int c = c0; c < c0 + k; ++c) modules.push_back(r * layout.module_cols + c);
    return modules;
  }
  throw std::domain_error("UE at " + std::to_string(dist) +
                          " m is inside the non-radiative zone of a single module (lower bound " +
                          std::to_string(lower_bound_for(module_diameter(layout), wavelength)) + " m)");
}

}  // namespace sbf
