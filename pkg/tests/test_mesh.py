import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moistfem.mesh import HORIZONTAL, VERTICAL, MeshError, build_vertical_slice


def test_counts_with_periodic_wrap():
    m = build_vertical_slice(3, 2, 3.0, 2.0)
    assert m.num_cells == 6
    assert m.num_vertical_facets == 6
    assert m.num_horizontal_facets == 9


def test_single_cell_mesh():
    m = build_vertical_slice(1, 1, 1.0, 1.0)
    assert m.num_cells == 1 and m.num_vertical_facets == 1
    assert m.facet_neighbors(m.vertical_facet(0, 0)) == (0, 0)
    lids = [m.facet_boundary_marker(m.horizontal_facet(0, j)) for j in range(2)]
    assert lids == ["bottom", "top"]


def test_bryan_fritsch_grid_spacing():
    m = build_vertical_slice(200, 100, 20000.0, 10000.0)
    assert m.dx == 100.0 and m.dz == 100.0


def test_neighbor_conventions():
    m = build_vertical_slice(4, 3, 4.0, 3.0)
    f = m.horizontal_facet(2, 1)
    assert m.facet_neighbors(f) == (m.cell_index(2, 1), m.cell_index(2, 0))
    assert m.facet_neighbors(m.horizontal_facet(1, 0)) == (m.cell_index(1, 0), None)
    plus, minus = m.facet_neighbors(m.vertical_facet(3, 2))
    assert {plus, minus} == {m.cell_index(3, 2), m.cell_index(0, 2)}
    assert plus == m.cell_index(0, 2)


@pytest.mark.parametrize("args", [(0, 1, 1.0, 1.0), (1, 0, 1.0, 1.0), (1, 1, 0.0, 1.0), (1, 1, 1.0, -2.0)])
def test_invalid_construction(args):
    with pytest.raises(MeshError):
        build_vertical_slice(*args)


def test_facet_id_out_of_range():
    m = build_vertical_slice(2, 2, 1.0, 1.0)
    with pytest.raises(MeshError):
        m.facet_neighbors(m.num_facets)
    with pytest.raises(MeshError):
        m.facet_normal(-1)


meshes = st.builds(
    build_vertical_slice,
    st.integers(1, 6), st.integers(1, 6),
    st.floats(0.5, 1e4), st.floats(0.5, 1e4),
)


@settings(max_examples=40, deadline=None)
@given(meshes)
def test_facet_invariants(m):
    for f in range(m.num_facets):
        n = m.facet_normal(f)
        assert np.isclose(np.linalg.norm(n), 1.0)
        plus, minus = m.facet_neighbors(f)
        if m.facet_kind(f) == VERTICAL:
            assert abs(n[0]) == 1.0 and n[1] == 0.0
            assert minus is not None and m.facet_boundary_marker(f) is None
        else:
            assert m.facet_kind(f) == HORIZONTAL
            assert abs(n[1]) == 1.0 and n[0] == 0.0
            assert (minus is None) == (m.facet_boundary_marker(f) is not None)


@settings(max_examples=40, deadline=None)
@given(meshes)
def test_cells_are_closed_and_tile_the_domain(m):
    total = 0.0
    for c in range(m.num_cells):
        facets = m.cell_facets(c)
        normals = m.cell_outward_normals(c)
        flux = sum(m.facet_measure(f) * n for f, n in zip(facets, normals))
        np.testing.assert_allclose(flux, 0.0, atol=1e-9 * (m.Lx + m.H))
        for f in facets:
            assert c in m.facet_neighbors(f)
        total += m.cell_area
    assert np.isclose(total, m.Lx * m.H, rtol=1e-12)
