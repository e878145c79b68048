"""Symbolic dynamics of the return map.

The two symbols are the angle bands

    M0 = {psi_eps - pi < Phi < psi_eps},   M1 = {psi_eps < Phi < psi_eps + pi}

of the lifted exit angle ``Phi``.  Itineraries are built by nested
refinement of the vertical base curve ``c(t) = (0, t)``, ``t`` in
``[delta1, delta2]``: on the current curve the stretches lying in ``M0``
and ``M1`` whose images join the two levels are located, the one named by
the next symbol is kept, and its image becomes the next curve.

Image curves are stored in their own height coordinate: the depth-``j``
curve is the graph ``h -> (psi_j(h), h)`` over ``[delta1, delta2]``, held
as a Chebyshev interpolant in ``log h``.  Parametrizing every curve by
the base parameter instead would lose all resolution after a few levels,
since each return stretches heights by a factor of a few hundred.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.optimize import brentq

from .errors import (
    DomainError,
    GapFailureError,
    RefinementInconsistencyError,
    ResolutionError,
    UsageError,
)
from .fields import FieldSpec
from .geometry import PlanePoint
from .maps import ScenarioConfig, exit_data, phi_extrema, return_data

BOUNDARY_TOL = 1e-10
LEVEL_SLACK = 1e-10
REALIZATION_TOL = 1e-8
INITIAL_SAMPLES = 256
LEVEL_SAMPLES = 64
MAX_SAMPLES = 2**20
PHI_JUMP = math.pi / 8
PARAM_RTOL = 1e-13
CHEB_TOL = 1e-12
CHEB_DEGREES = (16, 32, 64, 128, 256)
NEWTON_MAX = 80
PRECISION_TIGHTEN = 100.0
GAP_THRESHOLD = 4.0 * math.pi


class Membership(str, enum.Enum):
    M0 = "M0"
    M1 = "M1"
    NEITHER = "NEITHER"


@dataclass(frozen=True)
class SymbolSequence:
    """Finite word over ``{0, 1}``; ``offset`` is the index of its first symbol."""

    symbols: tuple
    offset: int = 0

    def __post_init__(self):
        syms = tuple(int(s) for s in self.symbols)
        if not syms:
            raise UsageError("symbol sequence must be nonempty")
        if any(s not in (0, 1) for s in syms):
            raise UsageError("symbols must be 0 or 1")
        object.__setattr__(self, "symbols", syms)

    @classmethod
    def from_string(cls, text: str, offset: int = 0) -> "SymbolSequence":
        if not text or set(text) - {"0", "1"}:
            raise UsageError(f"symbol string must be a nonempty word over 0/1, got {text!r}")
        return cls(tuple(int(c) for c in text), offset)

    def __len__(self) -> int:
        return len(self.symbols)

    def __str__(self) -> str:
        return "".join(map(str, self.symbols))


@dataclass(frozen=True)
class CurveSegment:
    """A stretch ``[t_lo, t_hi]`` of the depth-``depth`` image curve.

    At depth 0 the curve is the base segment ``c(t) = (0, t)``.  Deeper
    curves are the images selected by ``prefix`` (one symbol per level)
    and ``t`` is their height.  With ``reversed`` the parameter runs from
    ``delta2`` down to ``delta1``: height ``t_lo + t_hi - t``.
    """

    t_lo: float
    t_hi: float
    depth: int = 0
    prefix: tuple = ()
    reversed: bool = False

    def __post_init__(self):
        if not self.t_lo < self.t_hi:
            raise DomainError(f"degenerate segment [{self.t_lo}, {self.t_hi}]")
        if self.depth != len(self.prefix):
            raise UsageError("depth must equal the length of the prefix")

    def height(self, t: float) -> float:
        return self.t_lo + self.t_hi - t if self.reversed else t


class Crossings(NamedTuple):
    """Parameters with the curve in ``M0`` on ``(a0, b0)`` and in ``M1`` on ``(a1, b1)``.

    The return map sends both stretches onto curves joining the levels
    ``delta1`` and ``delta2``.
    """

    a0: float
    b0: float
    a1: float
    b1: float

    def band(self, symbol: int) -> tuple[float, float]:
        return (self.a0, self.b0) if symbol == 0 else (self.a1, self.b1)


@dataclass
class ItineraryResult:
    symbols: SymbolSequence
    interval: tuple
    witness_t: float
    orbit: list
    angles: list
    memberships: list
    levels: list
    local_intervals: list = field(default_factory=list)
    nested_intervals: list = field(default_factory=list)
    realization_errors: list = field(default_factory=list)
    tol_scale: float = 1.0
    diagnostic: Optional[dict] = None

    @property
    def base_resolved(self) -> bool:
        return self.interval[0] < self.interval[1]

    def to_json(self) -> dict:
        out = {
            "symbols": list(self.symbols.symbols),
            "offset": self.symbols.offset,
            "interval": [self.interval[0], self.interval[1]],
            "witness_t": self.witness_t,
            "orbit": [[p.psi, p.delta] for p in self.orbit],
            "angles": list(self.angles),
            "memberships": [m.value for m in self.memberships],
            "levels": list(self.levels),
            "local_intervals": [list(iv) for iv in self.local_intervals],
            "nested_intervals": [list(iv) for iv in self.nested_intervals],
            "realization_errors": list(self.realization_errors),
            "base_resolved": self.base_resolved,
            "tol_scale": self.tol_scale,
        }
        if self.diagnostic is not None:
            out["diagnostic"] = dict(self.diagnostic)
        return out


# ---------------------------------------------------------------------------
# angle bands


def angle_gap(cfg: ScenarioConfig, spec: Optional[FieldSpec] = None) -> float:
    """``m2 - m1``: least angle at level delta2 minus largest angle at level delta1."""
    m1, m2 = phi_extrema(cfg, spec)
    return m2 - m1


def classify_angle(cfg: ScenarioConfig, phi: float) -> Membership:
    d = phi - cfg.psi_eps
    if min(abs(d + math.pi), abs(d), abs(d - math.pi)) <= BOUNDARY_TOL:
        return Membership.NEITHER
    if -math.pi < d < 0:
        return Membership.M0
    if 0 < d < math.pi:
        return Membership.M1
    return Membership.NEITHER


def membership(cfg: ScenarioConfig, spec: Optional[FieldSpec], p) -> Membership:
    psi, delta = float(p[0]), float(p[1])
    if not (abs(psi) <= cfg.alpha and cfg.delta1 <= delta <= cfg.delta2):
        raise DomainError(f"{(psi, delta)} outside [-alpha, alpha] x [delta1, delta2]")
    return classify_angle(cfg, exit_data(cfg, psi, delta, spec=spec).phi)


# ---------------------------------------------------------------------------
# curves


def _lobatto(n: int) -> np.ndarray:
    return np.cos(np.pi * np.arange(n + 1) / n)[::-1]


class _Curve:
    """Graph ``h -> (psi(h), h)`` over ``[delta1, delta2]``; ``poly`` is None for the base curve."""

    def __init__(self, cfg: ScenarioConfig, spec: FieldSpec, poly: Optional[Chebyshev] = None):
        self.cfg = cfg
        self.spec = spec
        self.poly = poly
        self.dpoly = None if poly is None else poly.deriv()
        self.crossings: Optional[Crossings] = None

    def psi(self, h: float) -> float:
        return 0.0 if self.poly is None else float(self.poly(math.log(h)))

    def dpsi(self, h: float) -> float:
        return 0.0 if self.dpoly is None else float(self.dpoly(math.log(h))) / h

    def point(self, h: float) -> PlanePoint:
        return PlanePoint(self.psi(h), h)

    def phi(self, h: float) -> float:
        return exit_data(self.cfg, self.psi(h), h, spec=self.spec).phi

    def level(self, h: float) -> float:
        return float(return_data(self.cfg, self.psi(h), h, spec=self.spec).z[1])

    def image(self, h: float, jac: bool = False):
        rd = return_data(self.cfg, self.psi(h), h, jac=jac, spec=self.spec)
        if not jac:
            return rd.z, None
        return rd.z, rd.jac @ np.array([self.dpsi(h), 1.0])

    def solve_level(self, H: float, band: tuple, ends: tuple, guess: Optional[float] = None) -> float:
        """Height ``h`` in ``band`` whose image has height ``H``.

        ``ends`` are the image heights at the two ends of ``band``; the image
        height is monotone along the band.
        """
        lo, hi = band
        if H == ends[0]:
            return lo
        if H == ends[1]:
            return hi
        increasing = ends[1] > ends[0]
        if guess is None:
            w = (H - ends[0]) / (ends[1] - ends[0])
            guess = math.exp(math.log(lo) + w * (math.log(hi) - math.log(lo)))
        h = min(max(guess, lo), hi)
        for _ in range(NEWTON_MAX):
            z, dz = self.image(h, jac=True)
            F = z[1] - H
            if F == 0.0:
                return h
            if (F < 0) == increasing:
                lo = h
            else:
                hi = h
            slope = dz[1]
            h_new = h - F / slope if slope != 0 else math.nan
            if not (lo < h_new < hi):
                h_new = math.sqrt(lo * hi)
            if abs(h_new - h) <= 4e-16 * h or hi - lo <= 4e-16 * hi:
                return h_new
            h = h_new
        raise ResolutionError(f"no convergence solving for image height {H}")


def _fit_curve(cfg: ScenarioConfig, spec: FieldSpec, values) -> Chebyshev:
    """Chebyshev interpolant in ``log h`` of ``values(H)``, doubling the degree until the tail is resolved."""
    l1, l2 = math.log(cfg.delta1), math.log(cfg.delta2)
    cache: dict = {}

    prev = None
    for n in CHEB_DEGREES:
        xs = _lobatto(n)
        hs = np.exp(0.5 * (l1 + l2) + 0.5 * (l2 - l1) * xs)
        hs[0], hs[-1] = cfg.delta1, cfg.delta2
        keys = [round(float(x) * 2**40) for x in xs]
        todo = [k for k, key in enumerate(keys) if key not in cache]
        for k, v in zip(todo, values(hs[todo])):
            cache[keys[k]] = v
        ys = np.array([cache[key] for key in keys])
        poly = Chebyshev.fit(np.log(hs), ys, n, domain=[l1, l2])
        if prev is not None:
            err = float(np.max(np.abs(prev(np.log(hs[todo])) - ys[todo])))
            if err <= CHEB_TOL:
                return poly
        prev = poly
    raise ResolutionError(f"image curve not resolved by a degree-{CHEB_DEGREES[-1]} interpolant")


def _sample_phi(curve: _Curve, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    hs = list(np.geomspace(lo, hi, INITIAL_SAMPLES))
    hs[0], hs[-1] = lo, hi
    ph = [curve.phi(h) for h in hs]
    while True:
        jumps = [k for k in range(len(hs) - 1) if abs(ph[k + 1] - ph[k]) > PHI_JUMP]
        if not jumps:
            return np.array(hs), np.array(ph)
        if len(hs) + len(jumps) > MAX_SAMPLES:
            raise ResolutionError(f"angle along the curve not resolved with {MAX_SAMPLES} samples")
        for k in reversed(jumps):
            m = math.sqrt(hs[k] * hs[k + 1])
            if not hs[k] < m < hs[k + 1]:
                raise ResolutionError("angle jump between adjacent floating-point parameters")
            hs.insert(k + 1, m)
            ph.insert(k + 1, curve.phi(m))


def _changes(vals: np.ndarray, level: float) -> list[int]:
    below = vals < level
    return [k for k in range(len(vals) - 1) if below[k] != below[k + 1]]


def _root(f, lo: float, hi: float, span: float) -> float:
    # heights near delta1 can be far below the span, so the tolerance is also relative to the bracket
    return brentq(f, lo, hi, xtol=PARAM_RTOL * min(span, lo), rtol=4 * np.finfo(float).eps)


def _band_levels(curve: _Curve, lo: float, hi: float, first: float, last: float, span: float) -> tuple[float, float]:
    """In ``[lo, hi]``: ``b`` = first image-height hit of ``first``; ``a`` = last hit of ``last`` before ``b``."""
    hs = np.geomspace(lo, hi, LEVEL_SAMPLES + 1)
    hs[0], hs[-1] = lo, hi
    zs = np.array([curve.level(h) for h in hs])
    hits = _changes(zs, first)
    if not hits:
        raise ResolutionError(f"image of the band never reaches height {first:.6g}")
    k = hits[0]
    b = _root(lambda h: curve.level(h) - first, hs[k], hs[k + 1], span)
    before = [j for j in _changes(zs[: k + 2], last) if hs[j] < b]
    if not before:
        raise ResolutionError(f"image of the band never reaches height {last:.6g} before {first:.6g}")
    j = before[-1]
    a = _root(lambda h: curve.level(h) - last, hs[j], min(hs[j + 1], b), span)
    return a, b


def _curve_crossings(cfg: ScenarioConfig, curve: _Curve, lo: float, hi: float) -> Crossings:
    span = hi - lo
    hs, ph = _sample_phi(curve, lo, hi)
    psi = cfg.psi_eps

    def level_root(level, k):
        return _root(lambda h: curve.phi(h) - level, hs[k], hs[k + 1], span)

    mid_hits = _changes(ph, psi)
    if not mid_hits:
        raise ResolutionError("curve angle never reaches psi_eps")
    kb = mid_hits[0]
    b0p = level_root(psi, kb)
    low_hits = [k for k in _changes(ph[: kb + 1], psi - math.pi)]
    if not low_hits:
        raise ResolutionError("curve angle never reaches psi_eps - pi before psi_eps")
    a0p = level_root(psi - math.pi, low_hits[-1])
    high_hits = [k for k in _changes(ph, psi + math.pi) if k >= kb]
    if not high_hits:
        raise ResolutionError("curve angle never reaches psi_eps + pi")
    kh = high_hits[0]
    b1p = level_root(psi + math.pi, kh)
    mids = [k for k in mid_hits if k <= kh]
    a1p = level_root(psi, mids[-1])
    if not a0p < b0p <= a1p < b1p:
        raise ResolutionError("angle crossings out of order")
    a0, b0 = _band_levels(curve, a0p, b0p, cfg.delta2, cfg.delta1, span)
    a1, b1 = _band_levels(curve, a1p, b1p, cfg.delta1, cfg.delta2, span)
    return Crossings(a0, b0, a1, b1)


def _band_ends(cfg: ScenarioConfig, symbol: int) -> tuple[float, float]:
    """Image heights at the two ends of the band of ``symbol``."""
    return (cfg.delta1, cfg.delta2) if symbol == 0 else (cfg.delta2, cfg.delta1)


class ItineraryBuilder:
    """Builds itineraries on a calibrated scenario, caching image curves by symbol prefix."""

    def __init__(self, cfg: ScenarioConfig, spec: Optional[FieldSpec] = None, check_gap: bool = True):
        self.cfg = cfg
        self.spec = cfg.field if spec is None else spec
        if not cfg.delta1 < cfg.delta2:
            raise DomainError("levels delta1 < delta2 are required")
        self.gap = angle_gap(cfg, self.spec) if check_gap else math.nan
        if check_gap and not self.gap >= GAP_THRESHOLD:
            raise GapFailureError(f"angle gap {self.gap:.6g} is below 4 pi")
        self._curves: dict = {(): _Curve(cfg, self.spec)}

    def curve(self, prefix: tuple) -> _Curve:
        prefix = tuple(prefix)
        if prefix in self._curves:
            return self._curves[prefix]
        parent = self.curve(prefix[:-1])
        s = prefix[-1]
        band = self.crossings(prefix[:-1]).band(s)
        ends = _band_ends(self.cfg, s)

        def psi_values(Hs):
            out = []
            for H in Hs:
                h = parent.solve_level(float(H), band, ends)
                z, _ = parent.image(h)
                out.append(float(z[0]))
            return out

        try:
            poly = _fit_curve(self.cfg, self.spec, psi_values)
        except ResolutionError as exc:
            raise ResolutionError(str(exc), step=len(prefix) - 1) from exc
        c = _Curve(self.cfg, self.spec, poly)
        self._curves[prefix] = c
        return c

    def crossings(self, prefix: tuple) -> Crossings:
        c = self.curve(prefix)
        if c.crossings is None:
            try:
                c.crossings = _curve_crossings(self.cfg, c, self.cfg.delta1, self.cfg.delta2)
            except ResolutionError as exc:
                raise ResolutionError(str(exc), step=len(prefix)) from exc
        return c.crossings

    def pullback(self, prefix: tuple, symbol: int, H: float) -> float:
        """Height on the ``prefix`` curve, inside the band of ``symbol``, whose image has height ``H``."""
        band = self.crossings(prefix).band(symbol)
        return self.curve(prefix).solve_level(H, band, _band_ends(self.cfg, symbol))

    def build(self, symbols: SymbolSequence) -> ItineraryResult:
        cfg = self.cfg
        s = symbols.symbols
        n = len(s)
        local = []
        for j in range(n):
            local.append(self.crossings(s[:j]).band(s[j]))
        # witness: midpoint of the final band, then pulled back level by level
        h = 0.5 * (local[-1][0] + local[-1][1])
        heights = [0.0] * n
        heights[-1] = h
        for j in range(n - 2, -1, -1):
            heights[j] = self.pullback(s[:j], s[j], heights[j + 1])
        orbit = [self.curve(s[:j]).point(heights[j]) for j in range(n)]

        nested = [tuple(float(v) for v in local[-1])]
        for j in range(n - 2, -1, -1):
            lo, hi = nested[0]
            pl = sorted((float(self.pullback(s[:j], s[j], lo)), float(self.pullback(s[:j], s[j], hi))))
            if not (local[j][0] < pl[0] <= pl[1] < local[j][1]):
                raise RefinementInconsistencyError(f"interval at depth {j + 1} does not pull back inside its parent", step=j)
            nested.insert(0, tuple(pl))

        angles, members, levels, errors = [], [], [], []
        for j, p in enumerate(orbit):
            rd = return_data(cfg, p.psi, p.delta, spec=self.spec)
            m = classify_angle(cfg, rd.phi)
            if p.delta < cfg.delta1 - LEVEL_SLACK or p.delta > cfg.delta2 + LEVEL_SLACK or abs(p.psi) > cfg.alpha:
                raise RefinementInconsistencyError(f"orbit point {j} left the rectangle", step=j)
            if m.value != f"M{s[j]}":
                raise RefinementInconsistencyError(f"orbit point {j} is in {m.value}, expected M{s[j]}", step=j)
            lev = float(rd.z[1])
            if not (cfg.delta1 - LEVEL_SLACK <= lev <= cfg.delta2 + LEVEL_SLACK):
                raise RefinementInconsistencyError(f"image height {lev} of point {j} outside the levels", step=j)
            if j + 1 < n:
                err = float(np.hypot(rd.z[0] - orbit[j + 1].psi, rd.z[1] - orbit[j + 1].delta))
                if err > REALIZATION_TOL:
                    raise RefinementInconsistencyError(f"return of point {j} misses point {j + 1} by {err:.3g}", step=j)
                errors.append(err)
            angles.append(rd.phi)
            members.append(m)
            levels.append(lev)
        return ItineraryResult(
            symbols=symbols,
            interval=nested[0],
            witness_t=orbit[0].delta,
            orbit=orbit,
            angles=angles,
            memberships=members,
            levels=levels,
            local_intervals=[tuple(iv) for iv in local],
            nested_intervals=nested,
            realization_errors=errors,
            tol_scale=cfg.kernel_rtol / 1e-12,
        )


# ---------------------------------------------------------------------------
# public operations


def find_crossings(
    cfg: ScenarioConfig,
    spec: Optional[FieldSpec],
    seg: CurveSegment,
    builder: Optional[ItineraryBuilder] = None,
) -> Crossings:
    """Locate ``a0 < b0`` (band of M0) and ``a1 < b1`` (band of M1) on ``seg``.

    Parameters are in the segment's own parametrization; for a reversed
    segment the M1 band comes first.
    """
    if not cfg.delta1 < cfg.delta2:
        raise DomainError("levels delta1 < delta2 are required")
    if seg.t_lo < cfg.delta1 or seg.t_hi > cfg.delta2:
        raise DomainError(f"segment [{seg.t_lo}, {seg.t_hi}] not inside [delta1, delta2]")
    if builder is None:
        builder = ItineraryBuilder(cfg, spec, check_gap=False)
    curve = builder.curve(seg.prefix)
    try:
        c = _curve_crossings(cfg, curve, seg.t_lo, seg.t_hi)
    except ResolutionError as exc:
        raise ResolutionError(str(exc), step=seg.depth) from exc
    if not seg.reversed:
        return c
    m = lambda t: seg.t_lo + seg.t_hi - t  # noqa: E731
    return Crossings(m(c.b0), m(c.a0), m(c.b1), m(c.a1))


def _tightened(cfg: ScenarioConfig) -> ScenarioConfig:
    return cfg.with_(kernel_rtol=cfg.kernel_rtol / PRECISION_TIGHTEN)


def build_forward_itinerary(
    cfg: ScenarioConfig,
    spec: Optional[FieldSpec],
    symbols: SymbolSequence,
    N: Optional[int] = None,
    builder: Optional[ItineraryBuilder] = None,
) -> ItineraryResult:
    """Orbit ``x_0, ..., x_{N-1}`` of the return map with ``x_j`` in ``M_{s_j}``.

    On a refinement inconsistency the construction is repeated once with
    integrator tolerances tightened a hundredfold.
    """
    if symbols.offset != 0:
        raise UsageError("forward itineraries start at offset 0")
    if N is None:
        N = len(symbols)
    if N != len(symbols) or N < 1:
        raise UsageError(f"N={N} must equal the number of symbols {len(symbols)}")
    if builder is None:
        builder = ItineraryBuilder(cfg, spec)
    try:
        return builder.build(symbols)
    except RefinementInconsistencyError:
        retry = ItineraryBuilder(_tightened(builder.cfg), builder.spec, check_gap=False)
        return retry.build(symbols)


def build_window_trajectory(
    cfg: ScenarioConfig,
    spec: Optional[FieldSpec],
    symbols: SymbolSequence,
    J: int,
    N_forward: int,
    builder: Optional[ItineraryBuilder] = None,
    compare: bool = False,
) -> ItineraryResult:
    """Orbit ``x_{-J}, ..., x_{N_forward - 1}`` with ``x_j`` in ``M_{s_j}``.

    ``symbols`` carries offset ``-J``.  A forward itinerary of the whole
    word is built and its indices shifted by ``-J``.  With ``compare`` the
    window ``J - 1`` is also built and the distance between the two points
    of index 0 is reported in ``diagnostic``.
    """
    if J < 0 or N_forward < 1:
        raise UsageError("window J must be >= 0 and N_forward >= 1")
    if symbols.offset != -J or len(symbols) != J + N_forward:
        raise UsageError(f"symbols must cover indices {-J}..{N_forward - 1}")
    if builder is None:
        builder = ItineraryBuilder(cfg, spec)
    fwd = build_forward_itinerary(cfg, spec, SymbolSequence(symbols.symbols), builder=builder)
    fwd.symbols = symbols
    if compare and J >= 1:
        shorter = build_forward_itinerary(cfg, spec, SymbolSequence(symbols.symbols[1:]), builder=builder)
        a, b = fwd.orbit[J], shorter.orbit[J - 1]
        fwd.diagnostic = {
            "window": J,
            "previous_window": J - 1,
            "index0_distance": float(math.hypot(a.psi - b.psi, a.delta - b.delta)),
        }
    return fwd


def first_difference(a: Sequence[int], b: Sequence[int]) -> int:
    for k, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return k
    return min(len(a), len(b))


def intervals_disjoint(r1: ItineraryResult, r2: ItineraryResult) -> bool:
    """Final intervals of two itineraries compared on the curve where their words first differ."""
    k = first_difference(r1.symbols.symbols, r2.symbols.symbols)
    if k >= min(len(r1.symbols), len(r2.symbols)):
        return False
    i1, i2 = r1.nested_intervals[k], r2.nested_intervals[k]
    return i1[1] < i2[0] or i2[1] < i1[0]
