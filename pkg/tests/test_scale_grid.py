import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from dsiscale.errors import OutOfRange
from dsiscale.scale_grid import (
    GridLocation,
    SamplingScheme,
    interp_coeff,
    locate,
    sample_grid,
    uniform_scheme,
)


@pytest.mark.parametrize(
    "t, expected",
    [(3.0, (2, 1, 1.5)), (2.0, (1, 2, 2.0)), (2.5, (2, 1, 1.25))],
)
def test_locate_examples(scheme2, t, expected):
    loc = locate(t, scheme2)
    assert (loc.j, loc.i) == expected[:2]
    assert loc.s_star == pytest.approx(expected[2], rel=1e-15)


@pytest.mark.parametrize("t", [1.0, 0.5, 4.01, 100.0])
def test_locate_out_of_range(scheme2, t):
    with pytest.raises(OutOfRange):
        locate(t, scheme2)


def test_locate_upper_end_inclusive(scheme2):
    assert locate(4.0, scheme2) == GridLocation(2, 2, 2.0)


def test_interp_coeff_examples(scheme2):
    a, ab = interp_coeff(GridLocation(1, 2, 2.0), scheme2)
    assert (a, ab) == (1.0, 0.0)
    a, _ = interp_coeff(GridLocation(1, 2, 1.75), scheme2)
    assert a == 0.5
    a, ab = interp_coeff(GridLocation(1, 1, 1.1), scheme2)
    assert a == pytest.approx(0.2, abs=1e-15)
    assert a + ab == 1.0


def test_sample_grid_examples():
    assert sample_grid(200, 1.66, 1, [0, 1, 2]) == [200, 201, 202]
    assert sample_grid(246, 1.66, 2, [6]) == [255]
    assert sample_grid(77, 1.3, 3, [0]) == [77]


def test_sample_grid_dedupes_in_order():
    # factor 0.5 maps 0,1,2,3 to 0,0,1,1
    assert sample_grid(10, 0.5, 2, [0, 1, 2, 3]) == [10, 11]


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(lam=1.0, boundaries=(1.0, 1.0), n_scales=1),
        dict(lam=2.0, boundaries=(1.0, 1.8, 1.5, 2.0), n_scales=1),
        dict(lam=2.0, boundaries=(1.1, 2.0), n_scales=1),
        dict(lam=2.0, boundaries=(1.0, 1.9), n_scales=1),
        dict(lam=2.0, boundaries=(1.0, 2.0), n_scales=0),
    ],
)
def test_scheme_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        SamplingScheme(kwargs["lam"], kwargs["boundaries"], kwargs["n_scales"])


def test_scheme_json_round_trip():
    s = SamplingScheme(1.66, (1.0, 1.1428571428571428, 1.3, 1.66), 4)
    assert SamplingScheme.from_json(s.to_json()) == s


schemes = st.builds(
    lambda lam, cuts, m: SamplingScheme(lam, (1.0, *sorted(set(1 + (lam - 1) * c for c in cuts)), lam), m),
    st.floats(1.1, 5.0),
    st.lists(st.floats(0.05, 0.95), max_size=4),
    st.integers(1, 5),
)


@given(schemes, st.floats(0.0001, 0.9999))
def test_locate_reconstructs(scheme, frac):
    t = 1 + frac * (scheme.t_max - 1)
    loc = locate(t, scheme)
    back = scheme.scale_power(loc.j) * loc.s_star
    assert math.isclose(back, t, rel_tol=4e-16) or abs(back - t) <= t * 1e-9
    lo, hi = scheme.cell_bounds(loc.j, loc.i)
    assert lo * (1 - 1e-9) < t <= hi * (1 + 1e-9)


@given(schemes)
def test_cell_lengths_scale(scheme):
    for j in range(1, scheme.n_scales):
        for k in range(1, scheme.n_scales - j + 1):
            for i in range(1, scheme.q + 1):
                ratio = scheme.cell_length(j + k, i) / scheme.cell_length(j, i)
                assert ratio == pytest.approx(scheme.lam**k, rel=1e-12)


def test_partition_tiles_rational_grid():
    scheme = SamplingScheme(2.0, (1.0, 1.25, 1.5, 2.0), 3)
    # dyadic grid points are exact in binary floating point
    step = Fraction(1, 64)
    counts = {}
    t = Fraction(1) + step
    while t <= 8:
        loc = locate(float(t), scheme)
        lo, hi = scheme.cell_bounds(loc.j, loc.i)
        assert Fraction(lo) < t <= Fraction(hi)
        counts[(loc.j, loc.i)] = counts.get((loc.j, loc.i), 0) + 1
        t += step
    assert sorted(counts) == [(j, i) for j in (1, 2, 3) for i in (1, 2, 3)]
    # every grid point landed in exactly one cell
    assert sum(counts.values()) == 7 * 64


def test_uniform_scheme():
    s = uniform_scheme(2.0, 4, 4)
    assert s.boundaries == (1.0, 1.25, 1.5, 1.75, 2.0)
