#include "pfc/mesh.hpp"

#include <stdexcept>
#include <string>

namespace pfc {

CartesianMesh CartesianMesh::build(double x0, double x1, double y0, double y1,
                                   int nx, int ny, bool periodic_x,
                                   bool periodic_y) {
  if (!(x1 > x0) || !(y1 > y0))
    throw std::invalid_argument("CartesianMesh: domain extent must be positive");
  if (nx < 1 || ny < 1)
    throw std::invalid_argument("CartesianMesh: element counts must be positive");
  if (periodic_x && nx < 2)
    throw std::invalid_argument("CartesianMesh: periodic x requires nx >= 2");
  if (periodic_y && ny < 2)
    throw std::invalid_argument("CartesianMesh: periodic y requires ny >= 2");

  CartesianMesh m;
  m.x0_ = x0;
  m.x1_ = x1;
  m.y0_ = y0;
  m.y1_ = y1;
  m.nx_ = nx;
  m.ny_ = ny;
  m.periodic_x_ = periodic_x;
  m.periodic_y_ = periodic_y;
  m.hx_ = (x1 - x0) / nx;
  m.hy_ = (y1 - y0) / ny;
  m.nvx_ = periodic_x ? nx : nx + 1;
  m.nvy_ = periodic_y ? ny : ny + 1;
  m.nvfx_ = periodic_x ? nx : nx + 1;
  m.nvfy_ = periodic_y ? ny : ny + 1;

  m.faces_.reserve(static_cast<size_t>(m.nvfx_) * ny +
                   static_cast<size_t>(nx) * m.nvfy_);

  // Vertical faces: x-line index i in [0, nvfx), row j in [0, ny).
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < m.nvfx_; ++i) {
      Face f;
      f.id = m.vertical_face_index(i, j);
      f.orientation = FaceOrientation::Vertical;
      f.vertex = {m.vertex_index(i, j), m.vertex_index(i, j + 1)};
      // Element on the negative-x side (face is its right side).
      const bool has_neg = periodic_x || i > 0;
      const bool has_pos = periodic_x || i < nx;
      if (has_neg) {
        int ie = (i - 1 + nx) % nx;
        f.incidence[f.num_incidences++] = {m.element_index(ie, j), 1, +1};
      }
      if (has_pos) {
        int ie = i % nx;
        f.incidence[f.num_incidences++] = {m.element_index(ie, j), 0, -1};
      }
      m.faces_.push_back(f);
    }
  }
  // Horizontal faces: column i in [0, nx), y-line index j in [0, nvfy).
  for (int j = 0; j < m.nvfy_; ++j) {
    for (int i = 0; i < nx; ++i) {
      Face f;
      f.id = m.horizontal_face_index(i, j);
      f.orientation = FaceOrientation::Horizontal;
      f.vertex = {m.vertex_index(i, j), m.vertex_index(i + 1, j)};
      const bool has_neg = periodic_y || j > 0;
      const bool has_pos = periodic_y || j < ny;
      if (has_neg) {
        int je = (j - 1 + ny) % ny;
        f.incidence[f.num_incidences++] = {m.element_index(i, je), 3, +1};
      }
      if (has_pos) {
        int je = j % ny;
        f.incidence[f.num_incidences++] = {m.element_index(i, je), 2, -1};
      }
      m.faces_.push_back(f);
    }
  }
  return m;
}

int CartesianMesh::vertex_index(int i, int j) const {
  if (periodic_x_) i = (i % nx_ + nx_) % nx_;
  if (periodic_y_) j = (j % ny_ + ny_) % ny_;
  return j * nvx_ + i;
}

void CartesianMesh::check_element(int e) const {
  if (e < 0 || e >= num_elements())
    throw std::out_of_range("CartesianMesh: element id " + std::to_string(e) +
                            " out of range");
}

ElementGeometry CartesianMesh::element_geometry(int e) const {
  check_element(e);
  auto [i, j] = element_ij(e);
  return {x0_ + i * hx_, y0_ + j * hy_, hx_, hy_};
}

std::array<CartesianMesh::ElementFace, 4> CartesianMesh::faces_of_element(
    int e) const {
  check_element(e);
  auto [i, j] = element_ij(e);
  const int right = periodic_x_ ? (i + 1) % nx_ : i + 1;
  const int top = periodic_y_ ? (j + 1) % ny_ : j + 1;
  return {{{vertical_face_index(i, j), 0, -1},
           {vertical_face_index(right, j), 1, +1},
           {horizontal_face_index(i, j), 2, -1},
           {horizontal_face_index(i, top), 3, +1}}};
}

}  // namespace pfc
