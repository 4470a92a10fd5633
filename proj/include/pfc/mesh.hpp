#pragma once

#include <array>
#include <utility>
#include <vector>

namespace pfc {

/// Which axis a face is orthogonal to. Vertical faces have canonical
/// normal +x, horizontal faces +y.
enum class FaceOrientation { Vertical, Horizontal };

struct FaceIncidence {
  int element = -1;
  int local_face = -1;  // 0=left, 1=right, 2=bottom, 3=top of the element
  int normal_sign = 0;  // outward normal of the element relative to canonical
};

struct Face {
  int id = -1;
  FaceOrientation orientation = FaceOrientation::Vertical;
  int num_incidences = 0;
  std::array<FaceIncidence, 2> incidence{};
  std::array<int, 2> vertex{};  // endpoint vertex ids, in increasing parameter
};

struct ElementGeometry {
  double x0, y0;  // lower-left corner
  double hx, hy;
};

/// Structured quadrilateral mesh of a rectangle, optionally periodic per
/// direction. Elements are numbered row-major (x fastest); faces are
/// numbered verticals first (row-major over their (i,j) grid), then
/// horizontals; vertices are numbered row-major with periodic images
/// identified. Immutable after construction.
class CartesianMesh {
public:
  static CartesianMesh build(double x0, double x1, double y0, double y1,
                             int nx, int ny, bool periodic_x, bool periodic_y);

  int num_elements() const { return nx_ * ny_; }
  int num_faces() const { return static_cast<int>(faces_.size()); }
  int num_vertices() const { return nvx_ * nvy_; }

  double x0() const { return x0_; }
  double x1() const { return x1_; }
  double y0() const { return y0_; }
  double y1() const { return y1_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  bool periodic_x() const { return periodic_x_; }
  bool periodic_y() const { return periodic_y_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  double area() const { return (x1_ - x0_) * (y1_ - y0_); }

  int element_index(int i, int j) const { return j * nx_ + i; }
  std::pair<int, int> element_ij(int e) const { return {e % nx_, e / nx_}; }

  /// Canonical vertex id for grid position (i,j); indices wrap in
  /// periodic directions.
  int vertex_index(int i, int j) const;

  ElementGeometry element_geometry(int e) const;

  struct ElementFace {
    int face;
    int local;        // 0=left, 1=right, 2=bottom, 3=top
    int normal_sign;  // sign of this element's outward normal vs canonical
  };
  /// The four faces of element e, ordered (left, right, bottom, top).
  std::array<ElementFace, 4> faces_of_element(int e) const;

  const Face& face(int f) const { return faces_[f]; }
  const std::vector<Face>& faces() const { return faces_; }

  int vertical_face_index(int i, int j) const { return j * nvfx_ + i; }
  int horizontal_face_index(int i, int j) const {
    return ny_ * nvfx_ + j * nx_ + i;
  }

private:
  CartesianMesh() = default;
  void check_element(int e) const;

  double x0_, x1_, y0_, y1_;
  int nx_, ny_;
  bool periodic_x_, periodic_y_;
  double hx_, hy_;
  int nvx_, nvy_;    // vertex grid extents (wrapped when periodic)
  int nvfx_, nvfy_;  // vertical faces per row, horizontal faces per column
  std::vector<Face> faces_;
};

}  // namespace pfc
