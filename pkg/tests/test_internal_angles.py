from __future__ import annotations

import math

import pytest

from gaussfestoon.errors import OutOfRange
from gaussfestoon.internal_angles import MAX_SIMPLEX_DIM, internal_angle, internal_angle_table


def test_closed_forms() -> None:
    assert internal_angle(0, 1).value == 0.5
    assert internal_angle(0, 2).value == pytest.approx(1.0 / 6.0)
    assert internal_angle(1, 2).value == 0.5
    assert internal_angle(3, 3).value == 1.0
    assert internal_angle(2, 3).provenance == "closed-form"


def test_regular_tetrahedron_angles_are_exact() -> None:
    vertex = internal_angle(0, 3)
    edge = internal_angle(1, 3)

    assert vertex.provenance == "exact-cone"
    assert vertex.value == pytest.approx(math.acos(23.0 / 27.0) / (4.0 * math.pi))
    assert edge.value == pytest.approx(math.acos(1.0 / 3.0) / (2.0 * math.pi))
    assert edge.std_error == 0.0


def test_four_simplex_vertex_angle_is_sampled() -> None:
    angle = internal_angle(0, 4)

    assert angle.provenance == "monte-carlo"
    assert 0.0 < angle.value < internal_angle(0, 3).value
    assert angle.std_error > 0.0
    assert internal_angle(2, 4).provenance == "exact-cone"


def test_out_of_range() -> None:
    with pytest.raises(OutOfRange):
        internal_angle(0, MAX_SIMPLEX_DIM + 1)
    with pytest.raises(OutOfRange):
        internal_angle(3, 2)
    with pytest.raises(OutOfRange):
        internal_angle_table(0)


def test_table_covers_every_face_dimension() -> None:
    table = internal_angle_table(3)

    assert len(table.entries) == 2 + 3 + 4
    assert table.lookup(1, 3).value == pytest.approx(math.acos(1.0 / 3.0) / (2.0 * math.pi))
