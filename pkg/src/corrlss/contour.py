"""Closed integration contours around the correlation-matrix bulk.

Two regimes: an origin-avoiding contour built from a small circular arc of
radius c1 (dented around zero, crossing the real axis at c1 and C1 only) and
an origin-enclosing rectangle through Re z = -C1. Both are closed, traversed
counterclockwise, and mirror-symmetric across the real axis. Quadrature is
Gauss-Legendre per segment with adaptive node doubling.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mp_law import AspectRatio, mp_edges


class Regime(enum.Enum):
    AVOID_ORIGIN = "AvoidOrigin"
    ENCLOSE_ORIGIN = "EncloseOrigin"


class ContourGeometryError(ValueError):
    """Piece parameters violate the connection inequalities."""


class SeparationError(ValueError):
    """A contour pair is not disjoint enough for double quadrature."""


class QuadratureError(RuntimeError):
    """Adaptive refinement did not converge or hit a non-finite integrand."""


DEFAULT_NODES_PER_SEGMENT = 32
MAX_REFINEMENTS = 4
TRUNCATION_EXPONENT = 12  # nodes are kept off the real axis by n^-K


@dataclass(frozen=True)
class ContourParams:
    c1: float
    c2: float
    C1: float
    C2: float
    regime: Regime

    def __post_init__(self):
        if not (0 < self.c2 < self.c1):
            raise ContourGeometryError(f"need 0 < c2 < c1, got c2={self.c2}, c1={self.c1}")
        if not (0 < self.C1 < self.C2):
            raise ContourGeometryError(f"need 0 < C1 < C2, got C1={self.C1}, C2={self.C2}")
        if not self.c1 < self.C1:
            raise ContourGeometryError("pieces cannot connect: need c1 < C1")


@dataclass(frozen=True)
class Segment:
    """One oriented parameterized piece: straight chord or circular arc."""

    kind: str  # 'horizontal' | 'vertical' | 'circular-arc'
    start: complex
    end: complex
    radius: float = 0.0  # arc only; center is the origin
    theta0: float = 0.0
    theta1: float = 0.0

    def points(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map s in [-1, 1] to (z(s), dz/ds)."""
        if self.kind == "circular-arc":
            th = self.theta0 + (self.theta1 - self.theta0) * (s + 1) / 2
            z = self.radius * np.exp(1j * th)
            dz = self.radius * 1j * np.exp(1j * th) * (self.theta1 - self.theta0) / 2
            return z, dz
        mid = (self.start + self.end) / 2
        half = (self.end - self.start) / 2
        return mid + half * s, np.full_like(s, half, dtype=complex)


@dataclass(frozen=True)
class Contour:
    segments: tuple[Segment, ...]
    params: ContourParams
    ratio: AspectRatio
    nodes_per_segment: int = DEFAULT_NODES_PER_SEGMENT
    im_floor: float = 0.0

    def __post_init__(self):
        ends = [s.end for s in self.segments]
        starts = [self.segments[0].start] + ends[:-1]
        for seg, st in zip(self.segments, starts):
            if abs(seg.start - st) > 1e-12:
                raise ContourGeometryError("segments do not connect")
        if abs(self.segments[-1].end - self.segments[0].start) > 1e-12:
            raise ContourGeometryError("contour is not closed")

    def nodes(self, nodes_per_segment: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes z_k and weights w_k with sum w_k f(z_k) ~ closed integral."""
        nps = nodes_per_segment or self.nodes_per_segment
        s, w = np.polynomial.legendre.leggauss(nps)
        zs, ws = [], []
        for seg in self.segments:
            z, dz = seg.points(s)
            if self.im_floor > 0:
                im = np.imag(z)
                small = np.abs(im) < self.im_floor
                if np.any(small):
                    z = np.where(small, np.real(z) + 1j * np.sign(im + (im == 0)) * self.im_floor, z)
            zs.append(z)
            ws.append(w * dz)
        return np.concatenate(zs), np.concatenate(ws)

    def winding_number(self, a: complex, nodes_per_segment: int = 64) -> float:
        z, w = self.nodes(nodes_per_segment)
        return float(np.real(np.sum(w / (z - a)) / (2j * np.pi)))

    def to_json(self) -> str:
        payload = {
            "regime": self.params.regime.value,
            "params": {k: getattr(self.params, k) for k in ("c1", "c2", "C1", "C2")},
            "ratio": {"phi": self.ratio.phi, "n": self.ratio.n, "p": self.ratio.p},
            "nodes_per_segment": self.nodes_per_segment,
            "segments": [
                {
                    "kind": s.kind,
                    "start": [s.start.real, s.start.imag],
                    "end": [s.end.real, s.end.imag],
                    "radius": s.radius,
                    "theta": [s.theta0, s.theta1],
                }
                for s in self.segments
            ],
        }
        return json.dumps(payload, sort_keys=True)


def default_params(ratio: AspectRatio, regime: Optional[Regime] = None) -> ContourParams:
    """Defaults derived from the MP edges of ``ratio``: c1 = lm/2, c2 = lm/4,
    C1 = 2*lp, C2 = 3*lp. Regime defaults to AvoidOrigin iff phi < 1."""
    lm, lp = mp_edges(ratio)
    if regime is None:
        regime = Regime.AVOID_ORIGIN if ratio.phi < 1 else Regime.ENCLOSE_ORIGIN
    return ContourParams(c1=lm / 2, c2=lm / 4, C1=2 * lp, C2=3 * lp, regime=regime)


def _upper_path(params: ContourParams) -> list[Segment]:
    c1, c2, C1, C2 = params.c1, params.c2, params.C1, params.C2
    h = np.sqrt(c1 * c1 - c2 * c2)
    if params.regime is Regime.ENCLOSE_ORIGIN:
        # rectangle [-C1, C1] x [-C2, C2]; the left wall is one vertical
        # segment all the way down to the real axis
        return [
            Segment("vertical", C1 + 0j, C1 + 1j * h),
            Segment("vertical", C1 + 1j * h, C1 + 1j * C2),
            Segment("horizontal", C1 + 1j * C2, -C1 + 1j * C2),
            Segment("vertical", -C1 + 1j * C2, -C1 + 1j * h),
            Segment("vertical", -C1 + 1j * h, -C1 + 0j),
        ]
    th = np.arctan2(h, -c2)  # angle of the arc endpoint over Re z = -c2
    arc_start = c1 * np.exp(1j * th)
    return [
        Segment("vertical", C1 + 0j, C1 + 1j * h),
        Segment("vertical", C1 + 1j * h, C1 + 1j * C2),
        Segment("horizontal", C1 + 1j * C2, -C1 + 1j * C2),
        Segment("vertical", -C1 + 1j * C2, -C1 + 1j * h),
        Segment("horizontal", -C1 + 1j * h, -c2 + 1j * h),
        Segment("circular-arc", complex(arc_start), c1 + 0j, radius=c1, theta0=th, theta1=0.0),
    ]


def _mirror(seg: Segment) -> Segment:
    if seg.kind == "circular-arc":
        return Segment(
            "circular-arc",
            np.conj(seg.end),
            np.conj(seg.start),
            radius=seg.radius,
            theta0=-seg.theta1,
            theta1=-seg.theta0,
        )
    return Segment(seg.kind, np.conj(seg.end), np.conj(seg.start))


def build_contour(
    ratio: AspectRatio,
    params: Optional[ContourParams] = None,
    nodes_per_segment: int = DEFAULT_NODES_PER_SEGMENT,
) -> Contour:
    """Closed counterclockwise contour enclosing the MP bulk of ``ratio``.

    The origin is excluded iff params.regime is AvoidOrigin. In the avoiding
    regime c1 must sit below the lower bulk edge and C1 above the upper one.
    """
    if params is None:
        params = default_params(ratio)
    lm, lp = mp_edges(ratio)
    if params.regime is Regime.AVOID_ORIGIN and not params.c1 < lm:
        raise ContourGeometryError(f"AvoidOrigin needs c1 < lambda_-={lm}, got {params.c1}")
    if not params.C1 > lp:
        raise ContourGeometryError(f"need C1 > lambda_+={lp}, got {params.C1}")
    upper = _upper_path(params)
    lower = [_mirror(seg) for seg in reversed(upper)]
    im_floor = 0.0
    if ratio.n is not None:
        im_floor = float(ratio.n) ** (-TRUNCATION_EXPONENT)
    return Contour(
        segments=tuple(upper + lower),
        params=params,
        ratio=ratio,
        nodes_per_segment=nodes_per_segment,
        im_floor=im_floor,
    )


def nested_params(params: ContourParams, shrink: float = 0.75) -> ContourParams:
    """A parameter set whose contour nests strictly inside ``params``'s one."""
    if not 0 < shrink < 1:
        raise ValueError("shrink must be in (0, 1)")
    grow = 1 + (1 - shrink)
    return ContourParams(
        c1=params.c1 * grow,
        c2=params.c2 * grow,
        C1=params.C1 * shrink,
        C2=params.C2 * shrink,
        regime=params.regime,
    )


def disjoint_pair(
    ratio: AspectRatio,
    p1: Optional[ContourParams] = None,
    p2: Optional[ContourParams] = None,
    min_distance: float = 1e-3,
) -> tuple[Contour, Contour]:
    """Two pairwise-disjoint contours, both enclosing the bulk.

    Disjointness is verified on the quadrature node sets; the pair is
    normalized so the geometrically outer contour comes first.
    """
    if p1 is None:
        p1 = default_params(ratio)
    if p2 is None:
        p2 = nested_params(p1)
    g1 = build_contour(ratio, p1)
    g2 = build_contour(ratio, p2)
    # order-insensitive: outer = larger C2
    if g2.params.C2 > g1.params.C2:
        g1, g2 = g2, g1
    z1, _ = g1.nodes()
    z2, _ = g2.nodes()
    dist = np.min(np.abs(z1[:, None] - z2[None, :]))
    if dist < min_distance:
        raise SeparationError(f"contours too close: min node distance {dist:.3e}")
    return g1, g2


def contour_integrate(
    integrand: Callable[[np.ndarray], np.ndarray],
    contour: Contour,
    rel_tol: float = 1e-9,
    fail_tol: float = 1e-6,
) -> complex:
    """Closed-contour integral of a vectorized integrand by adaptive GL quadrature.

    Doubles nodes per segment until successive estimates differ by less than
    rel_tol * (1 + |estimate|), at most MAX_REFINEMENTS times.
    """
    def evaluate(nps: int) -> complex:
        z, w = contour.nodes(nps)
        fz = np.asarray(integrand(z), dtype=complex)
        if not np.all(np.isfinite(fz)):
            raise QuadratureError("integrand returned a non-finite value at a node")
        return complex(np.sum(fz * w))

    nps = contour.nodes_per_segment
    est = evaluate(nps)
    residual = np.inf
    for _ in range(MAX_REFINEMENTS):
        nps *= 2
        new = evaluate(nps)
        residual = abs(new - est)
        est = new
        if residual < rel_tol * (1 + abs(new)):
            return est
    if residual > fail_tol * (1 + abs(est)):
        raise QuadratureError(f"refinement cap reached with residual {residual:.3e}")
    return est
