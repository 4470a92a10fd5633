#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "pfc/mesh.hpp"

using namespace pfc;

TEST_CASE("periodic 2x2 torus counts") {
  auto m = CartesianMesh::build(0, 1, 0, 1, 2, 2, true, true);
  CHECK(m.num_elements() == 4);
  CHECK(m.num_faces() == 8);
  CHECK(m.num_vertices() == 4);
  // Euler characteristic of the torus: V - E + F = 0.
  CHECK(m.num_vertices() - m.num_faces() + m.num_elements() == 0);
}

TEST_CASE("non-periodic 2x2 counts") {
  auto m = CartesianMesh::build(0, 1, 0, 1, 2, 2, false, false);
  CHECK(m.num_elements() == 4);
  CHECK(m.num_faces() == 12);
  CHECK(m.num_vertices() == 9);
  CHECK(m.num_vertices() - m.num_faces() + m.num_elements() == 1);
}

TEST_CASE("paper mesh spacing") {
  auto m = CartesianMesh::build(0, 2 * M_PI, 0, 2 * M_PI, 48, 48, true, true);
  CHECK(m.hx() == doctest::Approx(2 * M_PI / 48).epsilon(1e-15));
  CHECK(m.hy() == doctest::Approx(2 * M_PI / 48).epsilon(1e-15));
  auto g = m.element_geometry(0);
  CHECK(g.x0 == 0.0);
  CHECK(g.hx == doctest::Approx(2 * M_PI / 48));
}

TEST_CASE("element geometry corners") {
  auto m = CartesianMesh::build(0, 1, 0, 1, 2, 2, false, false);
  auto g00 = m.element_geometry(m.element_index(0, 0));
  CHECK(g00.x0 == 0.0);
  CHECK(g00.y0 == 0.0);
  CHECK(g00.hx == 0.5);
  CHECK(g00.hy == 0.5);
  auto g11 = m.element_geometry(m.element_index(1, 1));
  CHECK(g11.x0 == 0.5);
  CHECK(g11.y0 == 0.5);
  CHECK_THROWS_AS((void)m.element_geometry(4), std::out_of_range);
  CHECK_THROWS_AS((void)m.element_geometry(-1), std::out_of_range);
}

TEST_CASE("periodic wrap faces") {
  auto m = CartesianMesh::build(0, 1, 0, 1, 2, 2, true, true);
  auto faces = m.faces_of_element(m.element_index(0, 0));
  // Left face of element (0,0) is the wrap face shared with (1,0).
  const Face& left = m.face(faces[0].face);
  CHECK(left.num_incidences == 2);
  std::set<int> elems = {left.incidence[0].element, left.incidence[1].element};
  CHECK(elems == std::set<int>{m.element_index(0, 0), m.element_index(1, 0)});
}

TEST_CASE("boundary faces have one incidence") {
  auto m = CartesianMesh::build(0, 1, 0, 1, 2, 2, false, false);
  auto faces = m.faces_of_element(m.element_index(0, 0));
  CHECK(m.face(faces[0].face).num_incidences == 1);  // left boundary
  CHECK(m.face(faces[1].face).num_incidences == 2);  // interior vertical
}

TEST_CASE("interior faces have opposite normal signs") {
  for (bool periodic : {false, true}) {
    auto m = CartesianMesh::build(0, 3, 0, 2, 3, 2, periodic, periodic);
    for (const Face& f : m.faces()) {
      if (f.num_incidences == 2)
        CHECK(f.incidence[0].normal_sign * f.incidence[1].normal_sign == -1);
      else
        CHECK(!periodic);
    }
  }
}

TEST_CASE("incidence sum equals 4 per element") {
  for (bool px : {false, true})
    for (bool py : {false, true}) {
      auto m = CartesianMesh::build(0, 1, 0, 1, 3, 4, px, py);
      int total = 0;
      for (const Face& f : m.faces()) total += f.num_incidences;
      CHECK(total == 4 * m.num_elements());
    }
}

TEST_CASE("faces_of_element ordering and signs") {
  auto m = CartesianMesh::build(0, 1, 0, 1, 3, 3, false, false);
  auto fs = m.faces_of_element(m.element_index(1, 1));
  CHECK(fs[0].local == 0);
  CHECK(fs[0].normal_sign == -1);
  CHECK(fs[1].local == 1);
  CHECK(fs[1].normal_sign == +1);
  CHECK(fs[2].local == 2);
  CHECK(fs[3].local == 3);
  // The same face seen from the two sides reports opposite signs.
  const Face& f = m.face(fs[1].face);
  REQUIRE(f.num_incidences == 2);
  CHECK(f.incidence[0].normal_sign != f.incidence[1].normal_sign);
}

TEST_CASE("determinism: rebuilding yields identical ids") {
  auto a = CartesianMesh::build(0, 2, 0, 1, 4, 3, true, false);
  auto b = CartesianMesh::build(0, 2, 0, 1, 4, 3, true, false);
  REQUIRE(a.num_faces() == b.num_faces());
  for (int f = 0; f < a.num_faces(); ++f) {
    CHECK(a.face(f).vertex == b.face(f).vertex);
    CHECK(a.face(f).num_incidences == b.face(f).num_incidences);
    for (int i = 0; i < a.face(f).num_incidences; ++i) {
      CHECK(a.face(f).incidence[i].element == b.face(f).incidence[i].element);
      CHECK(a.face(f).incidence[i].local_face == b.face(f).incidence[i].local_face);
    }
  }
}

TEST_CASE("invalid construction") {
  CHECK_THROWS_AS(CartesianMesh::build(1, 0, 0, 1, 2, 2, false, false),
                  std::invalid_argument);
  CHECK_THROWS_AS(CartesianMesh::build(0, 1, 0, 1, 0, 2, false, false),
                  std::invalid_argument);
  CHECK_THROWS_AS(CartesianMesh::build(0, 1, 0, 1, 1, 2, true, false),
                  std::invalid_argument);
  // A single non-periodic element is allowed.
  CHECK_NOTHROW(CartesianMesh::build(0, 1, 0, 1, 1, 1, false, false));
}

TEST_CASE("mixed periodicity counts") {
  auto m = CartesianMesh::build(0, 1, 0, 1, 3, 2, true, false);
  CHECK(m.num_vertices() == 3 * 3);
  CHECK(m.num_faces() == 3 * 2 + 3 * 3);
}
