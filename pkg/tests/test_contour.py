import json

import numpy as np
import pytest

from corrlss.contour import (
    Contour,
    ContourGeometryError,
    ContourParams,
    Regime,
    SeparationError,
    Segment,
    build_contour,
    contour_integrate,
    default_params,
    disjoint_pair,
    nested_params,
)
from corrlss.mp_law import AspectRatio, mp_edges


def test_winding_numbers():
    r2 = AspectRatio(phi=2.0)
    c = build_contour(r2)
    lm, lp = mp_edges(r2)
    assert c.winding_number((lm + lp) / 2) == pytest.approx(1.0, abs=1e-6)
    assert c.winding_number(0.0) == pytest.approx(1.0, abs=1e-6)  # EncloseOrigin

    r05 = AspectRatio(phi=0.5)
    c0 = build_contour(r05)
    assert c0.params.regime is Regime.AVOID_ORIGIN
    assert c0.winding_number(0.0) == pytest.approx(0.0, abs=1e-6)
    lm, lp = mp_edges(r05)
    assert c0.winding_number((lm + lp) / 2) == pytest.approx(1.0, abs=1e-6)


def test_regime_defaults_follow_phi():
    assert default_params(AspectRatio(phi=0.5)).regime is Regime.AVOID_ORIGIN
    assert default_params(AspectRatio(phi=2.0)).regime is Regime.ENCLOSE_ORIGIN


@pytest.mark.parametrize("phi", [0.5, 2.0])
def test_residue_theorem(phi):
    c = build_contour(AspectRatio(phi=phi))
    lm, lp = mp_edges(AspectRatio(phi=phi))
    inside = complex((lm + lp) / 2)
    outside = complex(c.params.C1 * 3)
    assert abs(contour_integrate(lambda z: 1 / (z - inside), c) - 2j * np.pi) < 1e-8
    assert abs(contour_integrate(lambda z: 1 / (z - outside), c)) < 1e-8
    assert abs(contour_integrate(lambda z: z**2, c)) < 1e-8


def test_conjugate_symmetric_nodes():
    c = build_contour(AspectRatio(phi=2.0))
    z, _ = c.nodes()
    zs = np.sort_complex(z)
    conj = np.sort_complex(np.conj(z))
    assert np.allclose(zs, conj, atol=1e-12)


def test_gauss_legendre_exactness_on_segment():
    seg = Segment("horizontal", -1.5 + 2j, 3.0 + 2j)
    s, w = np.polynomial.legendre.leggauss(32)
    z, dz = seg.points(s)
    for k in (5, 20, 63):  # up to 2*32 - 1
        est = np.sum(w * dz * z**k)
        exact = (seg.end ** (k + 1) - seg.start ** (k + 1)) / (k + 1)
        assert abs(est - exact) < 1e-9 * max(1.0, abs(exact))


def test_segment_split_invariance():
    r = AspectRatio(phi=2.0)
    c = build_contour(r)
    segs = list(c.segments)
    top = next(i for i, s in enumerate(segs) if s.kind == "horizontal")
    a, b = segs[top].start, segs[top].end
    mid = (a + b) / 2
    split = segs[:top] + [Segment("horizontal", a, mid), Segment("horizontal", mid, b)] + segs[top + 1 :]
    c2 = Contour(segments=tuple(split), params=c.params, ratio=r, im_floor=c.im_floor)
    f = lambda z: np.exp(z / 10) / (z - 2.5)
    v1 = contour_integrate(f, c)
    v2 = contour_integrate(f, c2)
    assert abs(v1 - v2) < 1e-10 * (1 + abs(v1))


def test_geometry_errors():
    with pytest.raises(ContourGeometryError):
        ContourParams(c1=0.1, c2=0.2, C1=5.0, C2=10.0, regime=Regime.AVOID_ORIGIN)
    with pytest.raises(ContourGeometryError):
        ContourParams(c1=0.1, c2=0.05, C1=10.0, C2=5.0, regime=Regime.AVOID_ORIGIN)
    r = AspectRatio(phi=0.5)
    lm, _ = mp_edges(r)
    bad = ContourParams(c1=lm * 1.5, c2=lm * 0.5, C1=20.0, C2=30.0, regime=Regime.AVOID_ORIGIN)
    with pytest.raises(ContourGeometryError):
        build_contour(r, bad)


def test_disjoint_pair_distance_and_order():
    r = AspectRatio(phi=2.0)
    outer, inner = disjoint_pair(r)
    z1, _ = outer.nodes()
    z2, _ = inner.nodes()
    dist = np.min(np.abs(z1[:, None] - z2[None, :]))
    assert dist > 0.05
    # order-insensitive normalization
    o2, i2 = disjoint_pair(r, inner.params, outer.params)
    assert o2.params == outer.params
    assert i2.params == inner.params
    z1b, _ = o2.nodes()
    z2b, _ = i2.nodes()
    assert np.min(np.abs(z1b[:, None] - z2b[None, :])) == pytest.approx(dist)


def test_identical_pair_rejected():
    r = AspectRatio(phi=2.0)
    p = default_params(r)
    with pytest.raises(SeparationError):
        disjoint_pair(r, p, p)


def test_both_regimes_nest():
    for phi in (0.5, 2.0):
        r = AspectRatio(phi=phi)
        outer, inner = disjoint_pair(r)
        lm, lp = mp_edges(r)
        mid = (lm + lp) / 2
        assert inner.winding_number(mid) == pytest.approx(1.0, abs=1e-6)
        assert outer.winding_number(mid) == pytest.approx(1.0, abs=1e-6)


def test_json_serialization():
    c = build_contour(AspectRatio(phi=2.0, n=400, p=200))
    payload = json.loads(c.to_json())
    assert payload["regime"] == "EncloseOrigin"
    assert payload["ratio"]["n"] == 400
    assert len(payload["segments"]) == len(c.segments)


def test_truncation_band_keeps_nodes_off_axis():
    c = build_contour(AspectRatio.from_dims(10, 5))
    assert c.im_floor == pytest.approx(10.0**-12)
    z, _ = c.nodes()
    assert np.all(np.abs(z.imag) >= c.im_floor)


def test_nested_params_shrink_validation():
    p = default_params(AspectRatio(phi=2.0))
    with pytest.raises(ValueError):
        nested_params(p, shrink=1.5)
