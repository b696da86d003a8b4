from __future__ import annotations

import numpy as np
import pytest

from gaussfestoon.rng import auxiliary_stream, replicate_stream


def test_replicate_stream_is_reproducible() -> None:
    first = replicate_stream(42, 3, grid_index=1).standard_normal(5)
    second = replicate_stream(42, 3, grid_index=1).standard_normal(5)

    assert np.array_equal(first, second)


def test_streams_differ_across_keys() -> None:
    base = replicate_stream(42, 0).random(4)

    assert not np.array_equal(base, replicate_stream(42, 1).random(4))
    assert not np.array_equal(base, replicate_stream(42, 0, grid_index=1).random(4))
    assert not np.array_equal(base, replicate_stream(43, 0).random(4))
    assert not np.array_equal(base, auxiliary_stream(42, 0).random(4))


def test_negative_indices_rejected() -> None:
    with pytest.raises(ValueError):
        replicate_stream(-1, 0)
    with pytest.raises(ValueError):
        replicate_stream(1, -2)
