"""The curl–Sobolev quotient, its Euler–Lagrange residual, recentering and
the improved-inequality diagnostics."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import spectral
from .closed_forms import dirac
from .fields import SpinorField, VectorField, lp_norm, pointwise_norm_power
from .gauge import GaugeResult, gauge_fix

log = logging.getLogger(__name__)


class DegenerateFieldError(ValueError):
    pass


@dataclass
class QuotientReport:
    curl_norm: float
    seminorm: float
    quotient: float
    multiplier: float
    el_residual: float
    gauge: GaugeResult | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("gauge")
        return d


def regularized_flux(B: VectorField, eps_reg: float = 1e-8) -> VectorField:
    """ρ_ε(B) = (|B|² + ε²)^{-1/4} B with ε = eps_reg·max|B|."""
    mag2 = np.sum(B.values**2, axis=0)
    eps = eps_reg * np.sqrt(mag2.max())
    denom = (mag2 + eps**2) ** 0.25
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(denom > 0, B.values / np.where(denom > 0, denom, 1.0), 0.0)
    return VectorField(B.grid, vals)


def el_field(A: VectorField, lam: float, eps_reg: float = 1e-8) -> VectorField:
    """curl(ρ_ε(curl A)) - λ|A|A."""
    rho = regularized_flux(spectral.curl(A), eps_reg)
    return spectral.curl(rho) - VectorField(A.grid, A.magnitude() * A.values) * lam


def _el_ratio(el: VectorField, A: VectorField, lam: float) -> float:
    num = spectral.negative_order_norm(el, 0.5)
    den = spectral.negative_order_norm(VectorField(A.grid, lam * A.magnitude() * A.values), 0.5)
    return num / den if den > 0 else float("inf")


def el_residual(A: VectorField, lam: float, eps_reg: float = 1e-8) -> float:
    """‖(-Δ)^{-1/2} EL(A)‖_2 relative to ‖(-Δ)^{-1/2}(λ|A|A)‖_2."""
    if not lam > 0:
        raise ValueError("multiplier must be positive")
    return _el_ratio(el_field(A, lam, eps_reg), A, lam)


def ball_el_residual(A: VectorField, radius: float, lam: float | None = None,
                     eps_reg: float = 1e-8) -> tuple[float, float]:
    """Relative L² residual of the EL equation on the centred ball of the given
    radius, and the multiplier used.

    When ``lam`` is omitted it is fitted by least squares on the ball, which
    separates the shape of the equation from the value of the multiplier
    (the whole-box multiplier carries the truncation error of the box seam).
    """
    g = A.grid
    mask = g.r2 < radius**2
    if not np.any(mask):
        raise ValueError("ball contains no grid points")
    flux = spectral.curl(regularized_flux(spectral.curl(A), eps_reg)).values[:, mask]
    P = (A.magnitude() * A.values)[:, mask]
    pp = float(np.sum(P * P))
    if pp == 0.0:
        raise DegenerateFieldError("A vanishes on the ball")
    if lam is None:
        lam = float(np.sum(flux * P)) / pp
    res = float(np.sqrt(np.sum((flux - lam * P) ** 2) / (lam**2 * pp))) if lam != 0 else float("inf")
    return res, lam


def curl_energy(A: VectorField) -> float:
    """∫|curl A|^{3/2}."""
    return pointwise_norm_power(spectral.curl(A), 1.5)


def quotient(A: VectorField, tol: float = 1e-7, max_iter: int = 2000, eps_reg: float = 1e-8,
             harmonic: bool = False) -> QuotientReport:
    """‖curl A‖_{3/2}^{3/2} / |||A|||_3^{3/2} with multiplier and EL residual
    evaluated at the gauge-fixed representative.

    ``harmonic`` lets the gauge also remove a constant vector (see
    :func:`curlsob.gauge.seminorm3`).
    """
    a3 = lp_norm(A, 3)
    gr = gauge_fix(A, tol, max_iter, harmonic=harmonic)
    if a3 == 0.0 or gr.seminorm < 1e-8 * a3:
        raise DegenerateFieldError("degenerate: gradient field")
    cn = lp_norm(spectral.curl(A), 1.5)
    q = cn**1.5 / gr.seminorm**1.5
    lam = cn**1.5 / gr.seminorm**3
    res = el_residual(gr.a_fixed, lam, eps_reg)
    return QuotientReport(cn, gr.seminorm, q, lam, res, gr)


# --- recentering -------------------------------------------------------------

def t_grid(grid, count: int = 60) -> np.ndarray:
    """Log-spaced heat times in [h², (2L)²]."""
    return np.geomspace(grid.h**2, (2 * grid.L) ** 2, count)


def _heat_profile(B: VectorField, ts) -> np.ndarray:
    w = spectral.waves(B.grid)
    bh = spectral.rfft3(B.values)
    out = np.empty(len(ts))
    for i, t in enumerate(ts):
        hb = spectral.irfft3(np.exp(-t * w.k2) * bh, B.grid.n)
        out[i] = t * np.sqrt(np.sum(hb**2, axis=0)).max()
    return out


def heat_sup(B: VectorField, count: int = 60, refine: bool = False) -> tuple[float, float]:
    """(sup_t t‖e^{tΔ}B‖_∞, maximising t) over the log-spaced t-grid,
    optionally refined by a bounded scalar search in log t."""
    ts = t_grid(B.grid, count)
    prof = _heat_profile(B, ts)
    i = int(np.argmax(prof))
    best, tbest = float(prof[i]), float(ts[i])
    if refine:
        lo, hi = np.log(ts[max(i - 1, 0)]), np.log(ts[min(i + 1, len(ts) - 1)])
        if hi > lo:
            res = minimize_scalar(lambda s: -_heat_profile(B, [np.exp(s)])[0], bounds=(lo, hi),
                                  method="bounded", options={"xatol": 1e-6})
            if -res.fun > best:
                best, tbest = float(-res.fun), float(np.exp(res.x))
    return best, tbest


def _subgrid_peak(mag: np.ndarray, grid) -> np.ndarray:
    idx = np.unravel_index(int(np.argmax(mag)), mag.shape)
    n = grid.n
    pos = np.empty(3)
    for ax in range(3):
        i = idx[ax]
        sl = list(idx)
        sl[ax] = (i - 1) % n
        fm = mag[tuple(sl)]
        sl[ax] = (i + 1) % n
        fp = mag[tuple(sl)]
        f0 = mag[idx]
        denom = fm - 2 * f0 + fp
        off = 0.5 * (fm - fp) / denom if denom < 0 else 0.0
        pos[ax] = grid.axis[i] + np.clip(off, -0.5, 0.5) * grid.h
    return pos


@dataclass
class RecenterResult:
    scale: float
    shift: np.ndarray
    t_star: float
    field: VectorField


def recenter(A: VectorField, target_t: float = 1.0, count: int = 60) -> RecenterResult:
    """Move the heat concentration point of curl A to the origin and its scale to
    ``target_t``: returns λ, a and the resampled field λ·A(λx + a)."""
    B = spectral.curl(A)
    if not np.any(np.abs(B.values) > 1e-14 * max(np.abs(A.values).max(), 1e-300)):
        raise DegenerateFieldError("curl vanishes identically")
    _, t_star = heat_sup(B, count, refine=True)
    hb = spectral.heat(B, t_star)
    center = _subgrid_peak(hb.magnitude(), A.grid)
    lam = float(np.sqrt(t_star / target_t))
    moved = spectral.resample_affine(A, lam, center, outside_zero=False) * lam
    return RecenterResult(lam, center, t_star, moved)


def dilate(A: VectorField, mu: float, shift=(0.0, 0.0, 0.0)) -> VectorField:
    """μ·A(μ(x - shift)) resampled on the same grid."""
    shift = np.asarray(shift, dtype=float)
    return spectral.resample_affine(A, mu, -mu * shift) * mu


# --- improved inequality -----------------------------------------------------

@dataclass
class ImprovedReport:
    ratio: float
    holder_ratio: float
    seminorm: float
    curl_norm: float
    heat_sup: float


def improved_ratio(A: VectorField, seminorm: float | None = None, tol: float = 1e-7) -> ImprovedReport:
    """R(A) = |||A|||_3 / (‖B‖_{3/2}^{1/2} (sup_t t‖e^{tΔ}B‖_∞)^{1/2}) for B = curl A,
    with the Hölder comparison sup_t t‖e^{tΔ}B‖_∞ / ‖B‖_{3/2}."""
    B = spectral.curl(A)
    bn = lp_norm(B, 1.5)
    if bn == 0.0:
        raise DegenerateFieldError("curl vanishes identically")
    m, _ = heat_sup(B)
    if seminorm is None:
        seminorm = gauge_fix(A, tol).seminorm
    return ImprovedReport(seminorm / np.sqrt(bn * m), m / bn, seminorm, bn, m)


def _spinor_heat_sup(D: SpinorField, count: int = 60) -> float:
    ts = t_grid(D.grid, count)
    w = spectral.waves(D.grid, half=False)
    dh = spectral.fft3(D.values)
    best = 0.0
    for t in ts:
        hd = spectral.ifft3(np.exp(-t * w.k2) * dh)
        best = max(best, t * float(np.sqrt(np.sum(np.abs(hd) ** 2, axis=0)).max()))
    return best


def improved_ratio_spinor(psi: SpinorField) -> ImprovedReport:
    """‖ψ‖_3 / (‖Dψ‖_{3/2}^{1/2} (sup_t t‖e^{tΔ}Dψ‖_∞)^{1/2}) for D = σ·(-i∇)."""
    D = dirac(psi)
    dn = lp_norm(D, 1.5)
    if dn == 0.0:
        raise DegenerateFieldError("Dirac operator annihilates the spinor")
    m = _spinor_heat_sup(D)
    pn = lp_norm(psi, 3)
    return ImprovedReport(pn / np.sqrt(dn * m), m / dn, pn, dn, m)


# --- minimisation --------------------------------------------------------------

@dataclass
class MinimizeOptions:
    step: float = 0.05
    tol: float = 0.05
    max_iter: int = 200
    eps_reg: float = 1e-8
    recenter_every: int = 25
    seed: int = 42
    gauge_tol: float = 1e-4
    bandlimit: float = 2.0 / 3.0
    max_halvings: int = 40
    harmonic: bool = False

    def __post_init__(self):
        for name in ("step", "tol", "eps_reg", "gauge_tol", "bandlimit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iter < 0 or self.recenter_every < 0:
            raise ValueError("max_iter and recenter_every must be non-negative")
        if self.eps_reg >= 1e-2:
            raise ValueError("eps_reg must be small")


@dataclass
class MinimizeTrace:
    quotient: list = field(default_factory=list)
    el_residual: list = field(default_factory=list)
    step: list = field(default_factory=list)
    recenterings: list = field(default_factory=list)
    final_field: VectorField | None = None
    converged: bool = False
    line_search_failed: bool = False
    iterations: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["iteration", "quotient", "el_residual", "step"])
        for i, (q, r, s) in enumerate(zip(self.quotient, self.el_residual, self.step)):
            wr.writerow([i, repr(q), repr(r), repr(s)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "initial_quotient": self.quotient[0] if self.quotient else None,
            "final_quotient": self.quotient[-1] if self.quotient else None,
            "final_el_residual": self.el_residual[-1] if self.el_residual else None,
            "converged": self.converged,
            "line_search_failed": self.line_search_failed,
            "recenterings": self.recenterings,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def _normalized_gauge(A: VectorField, tol: float, phi_init=None, harmonic: bool = False):
    gr = gauge_fix(A, tol, phi_init=phi_init, harmonic=harmonic)
    if gr.seminorm <= 1e-8 * lp_norm(A, 3):
        raise DegenerateFieldError("degenerate: gradient field")
    return gr.a_fixed / gr.seminorm, gr.seminorm


def _descent_direction(el: VectorField, bandlimit: float) -> VectorField:
    g = el.grid
    w = spectral.waves(g)
    dh = -spectral.rfft3(el.values) * w.inv_k2
    dh, _ = spectral.leray_hat(dh, w)
    D = VectorField(g, spectral.irfft3(dh, g.n))
    D = spectral.lowpass(D, bandlimit)
    nrm = lp_norm(D, 3)
    return D / nrm if nrm > 0 else D


def minimize(A0: VectorField, opts: MinimizeOptions | None = None) -> MinimizeTrace:
    """Preconditioned projected gradient descent on the quotient.

    Each iterate is gauge fixed and normalised to ‖A‖_3 = 1, so the quotient
    equals ∫|curl A|^{3/2} and the multiplier equals the quotient.  Search
    directions are the Euler–Lagrange field smoothed by (-Δ)^{-1}, projected
    onto divergence-free fields and band-limited; steps are accepted on strict
    decrease of the quotient.
    """
    opts = opts or MinimizeOptions()
    trace = MinimizeTrace()
    A = spectral.lowpass(A0, opts.bandlimit)
    if lp_norm(spectral.curl(A), 1.5) == 0.0:
        raise DegenerateFieldError("degenerate: gradient field")
    A, _ = _normalized_gauge(A, opts.gauge_tol, harmonic=opts.harmonic)
    target_t = None
    if opts.recenter_every:
        target_t = heat_sup(spectral.curl(A), refine=True)[1]
    Q = curl_energy(A)
    step = opts.step
    last_step = 0.0
    cell = A.grid.cell_volume
    for it in range(opts.max_iter + 1):
        el = el_field(A, Q, opts.eps_reg)
        res = _el_ratio(el, A, Q)
        trace.quotient.append(Q)
        trace.el_residual.append(res)
        trace.step.append(last_step)
        trace.iterations = it
        if res <= opts.tol:
            trace.converged = True
            break
        if it == opts.max_iter:
            break
        if opts.recenter_every and it > 0 and it % opts.recenter_every == 0:
            rc = recenter(A, target_t)
            A, _ = _normalized_gauge(spectral.lowpass(rc.field, opts.bandlimit), opts.gauge_tol,
                                        harmonic=opts.harmonic)
            Q = curl_energy(A)
            trace.recenterings.append({"iteration": it, "scale": rc.scale, "shift": rc.shift.tolist(), "quotient": Q})
            el = el_field(A, Q, opts.eps_reg)
        D = _descent_direction(el, opts.bandlimit)
        slope = 1.5 * float(np.sum(el.values * D.values)) * cell
        if slope >= 0:
            log.info("non-descent direction at iteration %d", it)
            trace.line_search_failed = True
            break
        s = step
        accepted = False
        for halvings in range(opts.max_halvings):
            trial, _ = _normalized_gauge(A + D * s, opts.gauge_tol, phi_init=np.zeros(A.grid.shape),
                                         harmonic=opts.harmonic)
            Qt = curl_energy(trial)
            if Qt <= Q + 1e-4 * s * slope:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            trace.line_search_failed = True
            log.info("line search failed at iteration %d", it)
            break
        A, Q, last_step = trial, Qt, s
        step = min(1.5 * s, 0.5) if halvings == 0 else s
    trace.final_field = A
    return trace
