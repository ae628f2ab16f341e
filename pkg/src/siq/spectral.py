"""Characteristic quasi-polynomials of the equilibrium families, winding
number root counts, Hopf-point detection in the isolation time, and the
closed-form large-delay spectra at tau = 0.

The characteristic function of a linearization with components (w_S, w_I)
is entire in lambda, with a trivial zero root along each equilibrium
family (order 1, or 2 for the latent-model disease-free family).  Right
half-plane roots are counted by the argument principle on rectangular
contours with adaptive sampling, and located by contour subdivision plus
Newton polishing.
"""

from __future__ import annotations

import cmath
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ContourThroughZero, EpsNotBelowOne, NumericalError
from .equilibria import endemic_point, q_critical
from .siq_model import ModelParams

TWO_PI = 2.0 * math.pi


def _one_minus_exp(z):
    """1 - exp(-z), accurate for small |z| (complex, vectorized)."""
    z = np.asarray(z)
    out = -np.expm1(-z.real) * np.exp(-1j * z.imag) + (1 - np.exp(-1j * z.imag))
    # assembled as 1 - e^{-x}e^{-iy} = (1 - e^{-iy}) + e^{-iy}(1 - e^{-x})
    return out


@dataclass(frozen=True)
class CharEq:
    """Characteristic function chi(lambda) at one equilibrium.

    For the three-compartment model (latent=False):
        chi = lam*(lam + 1 - r*w_S*(1 - eps*e^{-tau*lam})
                        + r*w_I*(1 - eps*e^{-(tau+kappa)*lam}))
              + r*w_I*eps*e^{-tau*lam}*(1 - e^{-kappa*lam})
    For the latent-model disease-free family (latent=True, w_I = 0):
        chi = lam^2*(lam + 1 - r*w_S*e^{-sigma*lam}*(1 - eps*e^{-tau*lam}))

    chi(0) = 0 exactly; ``trivial_order`` is the multiplicity of that
    structural zero root (1, or 2 for the latent family).
    """

    r: float
    eps: float
    tau: float
    kappa: float
    w_s: float
    w_i: float
    sigma: float = 0.0
    latent: bool = False
    trivial_order: int = 1

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=complex)
        et = np.exp(-self.tau * lam)
        if self.latent:
            es = np.exp(-self.sigma * lam)
            return lam * lam * (lam + 1.0
                                - self.r * self.w_s * es * (1.0 - self.eps * et))
        ek = np.exp(-self.kappa * lam)
        lin = (lam + 1.0
               - self.r * self.w_s * (1.0 - self.eps * et)
               + self.r * self.w_i * (1.0 - self.eps * et * ek))
        return lam * lin + self.r * self.w_i * self.eps * et * _one_minus_exp(
            self.kappa * lam)


def char_eval(chareq: CharEq, lam: complex) -> complex:
    """Evaluate chi at one point (functional form of CharEq.__call__)."""
    return complex(chareq(lam))


def disease_free_chareq(params: ModelParams, q: float) -> CharEq:
    """Linearization at the disease-free point (1-q, 0, q)."""
    return CharEq(r=params.r, eps=params.eps, tau=params.tau,
                  kappa=params.kappa, w_s=1.0 - q, w_i=0.0)


def endemic_chareq(params: ModelParams, q: float) -> CharEq:
    """Linearization at the endemic point with Q-component q:
    (1 - q_c, q_c - q, q)."""
    qc = q_critical(params.r, params.p, params.tau)
    return CharEq(r=params.r, eps=params.eps, tau=params.tau,
                  kappa=params.kappa, w_s=1.0 - qc, w_i=qc - q)


def seiq_disease_free_chareq(params: ModelParams, eta: float,
                             q: float) -> CharEq:
    """Linearization at the latent-model disease-free point
    (1-eta-q, eta, 0, q); the zero root has multiplicity 2."""
    return CharEq(r=params.r, eps=params.eps, tau=params.tau,
                  kappa=params.kappa, w_s=1.0 - eta - q, w_i=0.0,
                  sigma=params.sigma, latent=True, trivial_order=2)


class Box(NamedTuple):
    """Axis-aligned search rectangle in the complex plane."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def contains(self, lam: complex, slack: float = 0.0) -> bool:
        return (self.re_min - slack <= lam.real <= self.re_max + slack and
                self.im_min - slack <= lam.imag <= self.im_max + slack)


def default_box(chareq: CharEq) -> Box:
    """Right-half-plane rectangle excluding the trivial zero root.

    Re in [1e-8, max(10, r)]; |Im| bounded via the crossing-frequency
    scales (omega_max-style bounds and the 2*pi/kappa comb spacing).
    """
    im = max(4.0 * math.pi / max(chareq.kappa, chareq.tau, 1.0),
             TWO_PI * 10.0)
    return Box(1e-8, max(10.0, chareq.r), -im, im)


@dataclass(frozen=True)
class SpectralReport:
    """Root count and located roots inside a search box."""

    unstable_count: int
    roots: tuple[complex, ...]
    residuals: tuple[float, ...]
    classification: str
    box: Box


class _NearZero(Exception):
    """Internal: |chi| below threshold on the contour."""


def _pow2_at_least(n: float) -> int:
    return 1 << max(0, math.ceil(math.log2(max(n, 1.0))))


def _scaled_samples(box: Box, chareq: CharEq, floor: int) -> int:
    """Samples per side: resolve the 2*pi/kappa eigenvalue comb spacing."""
    extent = max(box.re_max - box.re_min, box.im_max - box.im_min)
    scale = max(chareq.kappa, chareq.tau + chareq.sigma, 1.0)
    return max(floor, min(16384, _pow2_at_least(1.3 * extent * scale)))


def _contour(box: Box, n: int) -> np.ndarray:
    re0, re1, im0, im1 = box
    bottom = re0 + (re1 - re0) * np.arange(n) / n + 1j * im0
    right = re1 + 1j * (im0 + (im1 - im0) * np.arange(n) / n)
    top = re1 - (re1 - re0) * np.arange(n) / n + 1j * im1
    left = re0 + 1j * (im1 - (im1 - im0) * np.arange(n) / n)
    pts = np.concatenate([bottom, right, top, left])
    return np.append(pts, pts[0])


def _winding_once(f, box: Box, n: int) -> int | None:
    vals = f(_contour(box, n))
    if np.min(np.abs(vals)) < 1e-12:
        raise _NearZero
    ang = np.angle(vals[1:] / vals[:-1])
    if np.max(np.abs(ang)) > 2.8:
        return None            # undersampled: a phase step neared pi
    total = ang.sum() / TWO_PI
    w = round(total)
    if abs(total - w) > 0.05:
        return None
    return int(w)


def _winding(f, box: Box, n0: int = 512, max_doublings: int = 8) -> int:
    """Winding number of f around box, doubling samples until the rounded
    count is stable twice (three consecutive agreements)."""
    counts: list[int] = []
    n = n0
    for _ in range(max_doublings):
        w = _winding_once(f, box, n)
        if w is not None:
            counts.append(w)
            if len(counts) >= 3 and counts[-1] == counts[-2] == counts[-3]:
                return counts[-1]
        n *= 2
    # persistent disagreement almost always means a root hugs the contour
    raise _NearZero


def _newton_polish(f, lam: complex, tol: float = 5e-14,
                   max_iter: int = 60) -> complex:
    for _ in range(max_iter):
        val = complex(f(lam))
        if abs(val) < tol:
            break
        h = 1e-7 * (1.0 + abs(lam))
        der = (complex(f(lam + h)) - complex(f(lam - h))) / (2.0 * h)
        if der == 0:
            break
        step = val / der
        lam = lam - step
        if abs(step) < 1e-15 * (1.0 + abs(lam)):
            break
    return lam


_CUT_FRACTIONS = (0.53, 0.47, 0.5, 0.57, 0.43, 0.61)


def _locate_roots(f, box: Box, count: int, chareq: CharEq) -> list[complex]:
    """Subdivide until cells are small, then Newton-polish cell centers."""
    roots: list[complex] = []

    def add(lam):
        for r0 in roots:
            if abs(lam - r0) < 1e-7 * (1.0 + abs(lam)):
                return
        roots.append(lam)

    stack: list[tuple[Box, int]] = [(box, count)]
    while stack and len(roots) < count:
        b, c = stack.pop()
        size = max(b.re_max - b.re_min, b.im_max - b.im_min)
        if size < 2e-3:
            lam = _newton_polish(f, complex(0.5 * (b.re_min + b.re_max),
                                            0.5 * (b.im_min + b.im_max)))
            if box.contains(lam, slack=1e-6):
                add(lam)
            continue
        for fx in _CUT_FRACTIONS:
            cut_re = b.re_min + fx * (b.re_max - b.re_min)
            cut_im = b.im_min + fx * (b.im_max - b.im_min)
            quads = [Box(b.re_min, cut_re, b.im_min, cut_im),
                     Box(cut_re, b.re_max, b.im_min, cut_im),
                     Box(b.re_min, cut_re, cut_im, b.im_max),
                     Box(cut_re, b.re_max, cut_im, b.im_max)]
            try:
                sub = [(qb, _winding(f, qb,
                                     n0=_scaled_samples(qb, chareq, 128),
                                     max_doublings=7))
                       for qb in quads]
            except _NearZero:
                continue       # a root sits on the cut: shift the cut
            for qb, wc in sub:
                if wc > 0:
                    stack.append((qb, wc))
            break
        else:
            raise ContourThroughZero(
                f"could not subdivide {b} without hitting a root")
    return roots


def count_unstable(chareq: CharEq, box: Box | None = None, *,
                   deflation: int | None = None, locate: bool = True,
                   samples: int = 512) -> SpectralReport:
    """Count (and optionally locate) roots of chi inside a rectangle.

    With box.re_min <= 0 the trivial zero root would sit inside, so chi is
    deflated by lambda^d; d defaults to the equilibrium family's trivial
    root order.  The contour is inflated and retried up to 3 times if a
    root (near-)touches it; ContourThroughZero is raised when that fails.
    """
    b = box or default_box(chareq)
    if deflation is not None:
        d = deflation
    elif b.re_min <= 1e-4:
        # also deflate when the edge merely hugs the axis: the trivial root
        # at 0 otherwise puts a near-pi phase step on straddling samples
        d = chareq.trivial_order
    else:
        d = 0

    if d:
        def f(lam):
            lam = np.asarray(lam, dtype=complex)
            return chareq(lam) / lam ** d
    else:
        f = chareq

    count = None
    n0 = _scaled_samples(b, chareq, samples)
    for attempt in range(4):
        try:
            count = _winding(f, b, n0=n0)
            break
        except _NearZero:
            pad = 1e-6 * (attempt + 1)
            re_min = b.re_min * 0.5 if b.re_min > 0 else b.re_min - pad
            b = Box(re_min, b.re_max + pad, b.im_min - pad, b.im_max + pad)
    if count is None:
        raise ContourThroughZero(f"contour repeatedly hit roots on {b}")

    roots: tuple[complex, ...] = ()
    residuals: tuple[float, ...] = ()
    if locate and count > 0:
        try:
            found = _locate_roots(f, b, count, chareq)
        except _NearZero:
            found = []
        roots = tuple(sorted(found, key=lambda z: (z.real, z.imag)))
        residuals = tuple(abs(complex(chareq(z))) for z in roots)

    if count == 0:
        cls = "stable"
    elif any(abs(z.real) < 1e-6 for z in roots):
        cls = "marginal"
    else:
        cls = f"unstable({count})"
    return SpectralReport(unstable_count=count, roots=roots,
                          residuals=residuals, classification=cls, box=b)


# ---------------------------------------------------------------------------
# closed forms at tau = 0
# ---------------------------------------------------------------------------

def strong_spectrum_tau0(r: float, p: float, q: float) -> tuple[complex, complex]:
    """Large-isolation-time strong spectrum at tau = 0 (q_c taken at eps = p):

    lambda_pm = (1/2) * [-r(1-p)(q_c - q)
                         +- sqrt((q_c - q)(r^2 (1-p)^2 (q_c - q) - 4p))]
    Both real parts are negative for every q in [0, q_c).
    """
    qc = q_critical(r, p, 0.0)
    dq = qc - q
    disc = dq * (r * r * (1.0 - p) ** 2 * dq - 4.0 * p)
    root = cmath.sqrt(complex(disc))
    a = -r * (1.0 - p) * dq
    return (0.5 * (a + root), 0.5 * (a - root))


@dataclass(frozen=True)
class AsymptoticSpectrum:
    """Large-kappa continuous-spectrum data at tau = 0.

    gamma(omega) is the rescaled real part (-log|Y(i omega)|); its sign
    pattern decides destabilization for large kappa.  h is the curvature
    proxy of |Y| at omega = 0 (h < 0: modulational instability).  q_h is
    the closed-form [q_h-, q_h+] stability window, or None when its
    discriminant is negative (flagged in ``note``, since the source
    formula asserts non-emptiness: cross-check against the sign of h).
    """

    h: float
    q_h: tuple[float, float] | None
    gamma: Callable[[np.ndarray], np.ndarray]
    note: str | None = None


def asymptotic_spectrum_tau0(r: float, p: float, q: float) -> AsymptoticSpectrum:
    """Asymptotic continuous spectrum of the endemic family at tau = 0."""
    qc = q_critical(r, p, 0.0)
    if not q < qc:
        raise ValueError(f"q = {q!r} must be below q_c = {qc!r}")
    dq = qc - q

    denom = p * r * dq
    h = ((1.0 - r * (1.0 - p + (p - 2.0) * qc - q)) / denom) ** 2 \
        - 2.0 / denom - 1.0

    a = (1.0 - 1.0 / r) - p + (p - 3.0) * qc
    disc = (a + p) ** 2 - (1.0 - p * p) * a * a
    note = None
    if disc >= 0.0:
        root = math.sqrt(disc)
        q_h = (qc - (a + p + root) / (1.0 - p * p),
               qc - (a + p - root) / (1.0 - p * p))
    else:
        q_h = None
        note = (f"q_h discriminant negative ({disc:.6g}); the closed-form "
                "window is empty here although its source asserts "
                "non-emptiness -- rely on the sign of h instead")

    lin = 1.0 + r * (1.0 - q) + p / (1.0 - p)
    const = r * dq * p

    def gamma(omega):
        lam = 1j * np.asarray(omega, dtype=float)
        y = (lam * lam + lam * lin + const) / (const * (lam + 1.0))
        return -np.log(np.abs(y))

    return AsymptoticSpectrum(h=h, q_h=q_h, gamma=gamma, note=note)


def e0_hopf_bound(r: float, p: float, tau: float) -> tuple[float, float]:
    """Peak of the disease-free crossing-frequency relation:
    q_max = 1 - (1/r)/(1 - eps^2) and omega_max^2 = eps^2/(1 - eps^2).

    No disease-free Hopf point exists; this bounds where one could have
    been, and caps |omega| in axis scans.
    """
    eps = p * math.exp(-tau)
    if eps >= 1.0:
        raise EpsNotBelowOne(f"eps = {eps!r} must be < 1")
    q_max = 1.0 - (1.0 / r) / (1.0 - eps * eps)
    w2 = eps * eps / (1.0 - eps * eps)
    return q_max, w2


# ---------------------------------------------------------------------------
# Hopf detection in kappa
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HopfData:
    """First destabilizing isolation time and crossing frequency."""

    kappa_0: float
    omega: float

    def kappa_m(self, m: int) -> float:
        return self.kappa_0 + TWO_PI * m / self.omega


def hopf_sequence(hopf: HopfData, m: int) -> float:
    """m-th member of the crossing cascade, kappa_0 + 2*pi*m/Omega."""
    if m < 0:
        raise ValueError("m must be >= 0")
    return hopf.kappa_m(m)


def _endemic_chareq_at(r, p, tau, q, kappa, track_leaf):
    params = ModelParams(r=r, p=p, tau=tau, kappa=kappa)
    if track_leaf:
        v = endemic_point(params, q)
        qc = q_critical(r, p, tau)
        return CharEq(r=r, eps=params.eps, tau=tau, kappa=kappa,
                      w_s=1.0 - qc, w_i=v.v_I)
    return endemic_chareq(params, q)


def _refine_crossing(chi_at, kappa_seed, omega_seed,
                     tol: float = 1e-13) -> tuple[float, float]:
    """Newton iteration on (kappa, omega) solving chi_kappa(i*omega) = 0.

    Works on the deflated function chi(i w)/(i w): same zeros for w != 0,
    but the structural root at w = 0 (where the kappa-derivative also
    degenerates) no longer attracts the iteration.
    """
    def g_at(k, w):
        return complex(chi_at(k)(1j * w)) / (1j * w)

    k, w = float(kappa_seed), float(omega_seed)
    for _ in range(80):
        g = g_at(k, w)
        if abs(g) < tol:
            break
        dk = 1e-6 * (1.0 + abs(k))
        dw = 1e-6 * (1.0 + abs(w))
        gk = (g_at(k + dk, w) - g_at(k - dk, w)) / (2 * dk)
        gw = (g_at(k, w + dw) - g_at(k, w - dw)) / (2 * dw)
        det = gk.real * gw.imag - gw.real * gk.imag
        if det == 0.0:
            break
        step_k = (g.real * gw.imag - gw.real * g.imag) / det
        step_w = (gk.real * g.imag - g.real * gk.imag) / det
        step_k = max(-1.0, min(1.0, step_k))
        step_w = max(-0.5, min(0.5, step_w))
        k -= step_k
        w -= step_w
        w = abs(w)                 # conjugate symmetry: keep the w > 0 branch
        if w < 1e-9:
            w = 1e-3
        if abs(step_k) + abs(step_w) < 1e-14:
            break
    return k, w


def hopf_crossings(r: float, p: float, tau: float, q: float,
                   kappa_max: float, *, max_crossings: int = 1,
                   scan_step: float = 0.05,
                   track_leaf: bool = False) -> list[HopfData]:
    """Detect successive +2 jumps of the unstable count as kappa grows.

    Scans kappa on [0, kappa_max] with ``scan_step`` resolution, bisects
    each count change to 1e-4, then refines (kappa, Omega) jointly on the
    imaginary axis so |chi(i Omega)| reaches solver precision.

    By default the equilibrium is the fixed point with Q-component q while
    kappa varies; with ``track_leaf`` the point is re-read from the leaf
    labelled q at each kappa (the outbreak-scenario destabilization).
    """
    qc = q_critical(r, p, tau)
    if not q < qc:
        raise ValueError(f"q = {q!r} must be below q_c = {qc!r}")

    def chi_at(kappa):
        return _endemic_chareq_at(r, p, tau, q, max(kappa, 0.0), track_leaf)

    def count_at(kappa):
        # None flags a root hugging the contour, i.e. a crossing right here
        try:
            return count_unstable(chi_at(kappa), locate=False).unstable_count
        except ContourThroughZero:
            return None

    def omega_seed(kappa):
        chi = chi_at(kappa)
        w_hi = default_box(chi).im_max
        grid = np.linspace(1e-3, w_hi, 8192)
        vals = np.abs(chi(1j * grid) / (1j * grid))   # deflate the 0 root
        return float(grid[int(np.argmin(vals))])

    def refine(lo, hi, c_lo):
        k_seed = 0.5 * (lo + hi)
        k0, w0 = _refine_crossing(chi_at, k_seed, omega_seed(k_seed))
        resid = abs(complex(chi_at(k0)(1j * w0)))
        if w0 <= 1e-6 or resid > 1e-10 or abs(k0 - k_seed) > 1.0:
            raise NumericalError(
                f"crossing refinement failed near kappa ~ {k_seed:.4f}: "
                f"kappa={k0!r}, omega={w0!r}, residual={resid!r}")
        # semantic validation: the unstable count steps by 2 across k0
        cap = max(0.3, min(2.0, 0.3 * TWO_PI / w0))
        margin = 0.25
        while margin <= cap:
            c_left = count_at(max(k0 - margin, 0.0))
            c_right = count_at(k0 + margin)
            if c_left is not None and c_right is not None:
                if c_left == c_lo and c_right == c_lo + 2:
                    return HopfData(kappa_0=k0, omega=w0)
                break
            margin *= 2
        raise NumericalError(
            f"no +2 count jump across refined crossing kappa={k0!r}")

    found: list[HopfData] = []
    kappas = np.arange(0.0, kappa_max + scan_step / 2, scan_step)
    prev_k = float(kappas[0])
    prev_c = count_at(prev_k)
    if prev_c is None:
        raise NumericalError("unstable count undecidable at the scan start")
    for k in kappas[1:]:
        k = float(k)
        c = count_at(k)
        if c is None:
            continue               # crossing in progress: next valid count jumps
        if c > prev_c:
            lo, hi, c_lo = prev_k, k, prev_c
            while hi - lo > 1e-4:
                mid = 0.5 * (lo + hi)
                c_mid = count_at(mid)
                if c_mid is None:  # the pair hugs the axis: seed Newton here
                    lo = hi = mid
                    break
                if c_mid > c_lo:
                    hi = mid
                else:
                    lo = mid
            found.append(refine(lo, hi, c_lo))
            if len(found) >= max_crossings:
                return found
        prev_k, prev_c = k, c
    return found


def hopf_kappa0(r: float, p: float, tau: float, q: float, kappa_max: float,
                *, scan_step: float = 0.05,
                track_leaf: bool = False) -> HopfData | None:
    """First Hopf point kappa_0(q) with its frequency Omega(q), or None if
    the equilibrium stays stable for kappa up to kappa_max."""
    found = hopf_crossings(r, p, tau, q, kappa_max, max_crossings=1,
                           scan_step=scan_step, track_leaf=track_leaf)
    return found[0] if found else None


# ---------------------------------------------------------------------------
# stability map over (q, kappa)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityMap:
    """Unstable-root counts of the endemic family on a (q, kappa) grid.

    counts[i, j] belongs to (q_grid[i], kappa_grid[j]); -1 marks cells
    whose count failed (the error is recorded in ``errors``).
    """

    q_grid: tuple[float, ...]
    kappa_grid: tuple[float, ...]
    counts: np.ndarray
    errors: tuple[tuple[int, int, str], ...]


def stability_map(r: float, p: float, tau: float,
                  q_grid: Sequence[float], kappa_grid: Sequence[float],
                  threads: int | None = None) -> StabilityMap:
    """Per-cell unstable counts for the endemic equilibria w(q).

    Cells are independent pure computations; SIQ_THREADS (or ``threads``)
    caps the worker pool.  Results are merged by cell index, so the output
    is deterministic regardless of scheduling.
    """
    qs = [float(v) for v in q_grid]
    ks = [float(v) for v in kappa_grid]
    if threads is None:
        threads = int(os.environ.get("SIQ_THREADS", os.cpu_count() or 1))
    threads = max(1, min(threads, len(qs) * len(ks)))

    counts = np.full((len(qs), len(ks)), -1, dtype=int)
    errors: list[tuple[int, int, str]] = []

    def cell(idx):
        i, j = idx
        chi = _endemic_chareq_at(r, p, tau, qs[i], ks[j], track_leaf=False)
        return i, j, count_unstable(chi, locate=False).unstable_count

    indices = [(i, j) for i in range(len(qs)) for j in range(len(ks))]
    if threads == 1:
        for idx in indices:
            try:
                i, j, c = cell(idx)
                counts[i, j] = c
            except Exception as exc:       # per-cell failure -> unknown cell
                errors.append((idx[0], idx[1], f"{type(exc).__name__}: {exc}"))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(cell, idx): idx for idx in indices}
            for fut, idx in futures.items():
                try:
                    i, j, c = fut.result()
                    counts[i, j] = c
                except Exception as exc:   # per-cell failure -> unknown cell
                    errors.append((idx[0], idx[1], f"{type(exc).__name__}: {exc}"))

    return StabilityMap(q_grid=tuple(qs), kappa_grid=tuple(ks),
                        counts=counts, errors=tuple(errors))


__all__ = [
    "CharEq", "char_eval", "disease_free_chareq", "endemic_chareq",
    "seiq_disease_free_chareq", "Box", "default_box", "SpectralReport",
    "count_unstable", "strong_spectrum_tau0", "AsymptoticSpectrum",
    "asymptotic_spectrum_tau0", "e0_hopf_bound", "HopfData",
    "hopf_sequence", "hopf_crossings", "hopf_kappa0", "StabilityMap",
    "stability_map",
]
