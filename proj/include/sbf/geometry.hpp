#pragma once

#include <Eigen/Dense>

#include <vector>

namespace sbf {

using Vec3 = Eigen::Vector3d;

inline constexpr double kSpeedOfLight = 299792458.0;

inline double wavelength_for(double frequency_hz) { return kSpeedOfLight / frequency_hz; }

// Planar array tiled into a grid of identical rectangular sub-array modules.
//
// Elements are numbered in concatenation order: module-major (modules
// row-major over the module grid, module 0 at the origin corner), then
// row-major inside each module. Column steps run along `row_axis`, row steps
// along `row_axis x normal`. With the defaults (row_axis = +x, normal = +y)
// the aperture lies in the xz plane and rows stack upward in z.
struct ArrayLayout {
  int module_rows = 1;
  int module_cols = 1;
  int sub_rows = 1;
  int sub_cols = 1;
  double spacing = 0.0;
  Vec3 origin = Vec3::Zero();
  Vec3 normal = Vec3::UnitY();
  Vec3 row_axis = Vec3::UnitX();

  int rows() const { return module_rows * sub_rows; }
  int cols() const { return module_cols * sub_cols; }
  int element_count() const { return rows() * cols(); }
  int module_count() const { return module_rows * module_cols; }
  int module_size() const { return sub_rows * sub_cols; }

  // Unit vector along which rows advance.
  Vec3 up_axis() const { return row_axis.cross(normal).normalized(); }

  // Throws std::invalid_argument when counts, spacing or axes are unusable.
  void validate() const;
};

// Builds the layout of a uniform array with `spacing` pitch. The full array
// is (module_rows*sub_rows) x (module_cols*sub_cols) elements.
ArrayLayout make_layout(int module_rows, int module_cols, int sub_rows, int sub_cols, double spacing,
                        const Vec3& origin = Vec3::Zero());

struct FresnelBounds {
  double lower = 0.0;      // radiating near-field onset
  double upper = 0.0;      // far-field onset
  double sub_lower = 0.0;  // lower bound of a single module aperture
};

enum class Zone { NonRadiative, Fresnel, FarField };

const char* to_string(Zone zone);

Vec3 element_position(const ArrayLayout& layout, int n);

// Element indices of module m, in concatenation order.
std::vector<int> module_slice(const ArrayLayout& layout, int m);

// Centroid of all elements.
Vec3 aperture_center(const ArrayLayout& layout);

// Centroid of the elements of module m.
Vec3 module_center(const ArrayLayout& layout, int m);

// Bounding-box diagonal of the element positions.
double aperture_diameter(const ArrayLayout& layout);

// Diameter of a single module (bounding-box diagonal of its elements).
double module_diameter(const ArrayLayout& layout);

// lower = 0.62 sqrt(D^3 / lambda), upper = 2 D^2 / lambda; sub_lower = lower.
FresnelBounds fresnel_bounds(double diameter, double wavelength);

// Bounds of the full aperture with sub_lower taken from one module.
FresnelBounds fresnel_bounds(const ArrayLayout& layout, double wavelength);

// Closed interval: points exactly on a bound are Fresnel.
Zone zone_classify(const Vec3& ue, const ArrayLayout& layout, const FresnelBounds& bounds);

// True iff |module_center(m) - ue| lies in [bounds.sub_lower, bounds.upper].
bool subarray_constraint_ok(const Vec3& ue, int m, const ArrayLayout& layout,
                            const FresnelBounds& bounds);

// Modules left active so the UE sits inside the Fresnel zone of the active
// aperture. All modules when the UE is beyond the full-aperture lower bound;
// otherwise the largest centred k x k block of modules whose diameter D'
// satisfies 0.62 sqrt(D'^3 / lambda) <= |aperture_center - ue|.
// Throws std::domain_error when the UE is closer than a single module's
// lower bound.
std::vector<int> effective_module_set(const Vec3& ue, const ArrayLayout& layout, double wavelength);

}  // namespace sbf
