import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zerocurrents.geometry import CP1, CP1xCP1
from zerocurrents.growth import exact_dimension, growth_records, jet_lower_bound, verify_growth
from zerocurrents.metrics import BundleFamily, BundleSequence
from zerocurrents.spherefunc import perturbation


def test_exact_dimensions():
    assert exact_dimension(CP1, 0) == 1
    assert exact_dimension(CP1, (7,)) == 8
    assert exact_dimension(CP1xCP1, (3, 2)) == 12
    with pytest.raises(ValueError):
        exact_dimension(CP1xCP1, (3,))
    with pytest.raises(ValueError):
        exact_dimension(CP1, (2.5,))
    with pytest.raises(ValueError):
        exact_dimension(CP1, (-1,))


def test_jet_bound_examples():
    assert jet_lower_bound(20, 0.5, 1) == 9
    assert jet_lower_bound(20, 0.5, 2) == 44
    with pytest.raises(ValueError):
        jet_lower_bound(20, 0.5, 0)
    with pytest.raises(ValueError):
        jet_lower_bound(20, 0.0, 1)
    with pytest.warns(UserWarning, match="vacuous"):
        assert jet_lower_bound(3, 0.5, 2) == 0


@pytest.mark.filterwarnings("ignore:.*vacuous")
@given(st.integers(2, 5000), st.sampled_from([0.25, 0.5, 1.0]))
def test_jet_bound_below_dimension(p, b):
    assert jet_lower_bound(p, b, 1) <= exact_dimension(CP1, p)
    assert jet_lower_bound(p, b, 2) <= exact_dimension(CP1xCP1, (2 * p, p))


def test_verify_growth_cp1():
    seq = BundleSequence(CP1, (BundleFamily((1.0,), (), perturbation("none", CP1)),))
    res = verify_growth(growth_records(seq, [50, 100, 200, 400, 800]), n=1)
    assert res.bound_holds and res.C3 == pytest.approx(1.0 + 1 / 800)
    assert np.allclose(res.ratios, [1 + 1 / p for p in (50, 100, 200, 400, 800)])
    assert res.cauchy_spread < 0.01


def test_verify_growth_product():
    pert = perturbation("none", CP1xCP1)
    seq = BundleSequence(CP1xCP1, (BundleFamily((2.0, 1.0), (), pert),
                                   BundleFamily((1.0, 2.0), (), pert)))
    recs = growth_records(seq, [100, 200, 400, 800])
    assert recs[0] == (100, 100.0, 201 * 101)
    res = verify_growth(recs, n=2)
    assert res.bound_holds and res.C3 >= 0.9
    assert res.ratios[-1] == pytest.approx(2.0, rel=0.01)
    assert math.isclose(res.cauchy_spread, (res.ratios[-3] - res.ratios[-1]) / res.ratios[-1])


def test_verify_growth_errors():
    with pytest.raises(ValueError, match="no growth"):
        verify_growth([], 1)
    with pytest.raises(ValueError, match="three"):
        verify_growth([(1, 1.0, 2), (2, 2.0, 3)], 1)
    with pytest.raises(ValueError, match="increasing"):
        verify_growth([(1, 2.0, 3), (2, 2.0, 3), (3, 3.0, 4)], 1)
