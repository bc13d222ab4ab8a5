"""Gauge fixing: the L^3 gauge seminorm, Helmholtz splitting and local L^2 seminorms.

The seminorm ``|||A|||_3 = inf_φ ‖A - ∇φ‖_3`` is computed by minimising
``F(φ) = ∫|A - ∇φ|^3`` with nonlinear conjugate gradients preconditioned by
the inverse of the discrete Laplacian ``-div∘grad``.  The integrand is C¹
with vanishing gradient at zero, so unlike the curl term of the quotient no
regularisation is needed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as splinalg

from . import spectral
from .fields import Grid, ScalarField, VectorField, lp_norm
from .spectral import div_hat, grad_hat, irfft3, rfft3, waves

log = logging.getLogger(__name__)


class GaugeSolverError(RuntimeError):
    pass


@dataclass
class HelmholtzResult:
    a_tilde: VectorField
    phi: ScalarField


@dataclass
class GaugeResult:
    phi0: ScalarField
    a_fixed: VectorField
    seminorm: float
    constraint_residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)
    harmonic: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def to_dict(self) -> dict:
        return {
            "harmonic": [float(v) for v in self.harmonic],
            "seminorm": self.seminorm,
            "constraint_residual": self.constraint_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_phi0_l3": lp_norm(spectral.gradient(self.phi0), 3),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def helmholtz(A: VectorField) -> HelmholtzResult:
    """A = Ã + ∇φ with div Ã = 0 and mean-free φ."""
    g = A.grid
    w = waves(g)
    ah, phih = spectral.leray_hat(rfft3(A.values), w)
    return HelmholtzResult(VectorField(g, irfft3(ah, g.n)), ScalarField(g, irfft3(phih, g.n)))


def _exact_part(P: np.ndarray, grid: Grid, w, harmonic: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """L²-orthogonal projection of P onto gradients (plus constants when
    ``harmonic``): returns the projected field, its potential spectrum and
    its constant part."""
    ph = rfft3(P)
    zh = -div_hat(ph, w) * w.inv_kd2
    Z = irfft3(grad_hat(zh, w), grid.n)
    c = P.mean(axis=(1, 2, 3)) if harmonic else np.zeros(3)
    return Z + c[:, None, None, None], zh, c


def _l32(Z: np.ndarray, grid: Grid) -> float:
    return float((np.sum(np.sqrt(np.sum(Z**2, axis=0)) ** 1.5) * grid.cell_volume) ** (2.0 / 3.0))


def _gradient_part_norm(P: np.ndarray, grid: Grid, w, harmonic: bool = False) -> float:
    """‖∇(-div∘grad)^{-1} div P‖_{3/2}: the gradient component of P."""
    return _l32(_exact_part(P, grid, w, harmonic)[0], grid)


def _relative_constraint(V: np.ndarray, grid: Grid, w, harmonic: bool = False) -> float:
    mag = np.sqrt(np.sum(V**2, axis=0))
    size = float(np.sum(mag**3) * grid.cell_volume) ** (2.0 / 3.0)  # ‖|V|V‖_{3/2} = ‖V‖_3²
    if size == 0.0:
        return 0.0
    return _gradient_part_norm(mag * V, grid, w, harmonic) / size


def constraint_residual(A: VectorField, harmonic: bool = False) -> float:
    """Relative size of the gradient part of |A|A, zero iff div(|A|A) = 0.

    With ``harmonic`` the mean of |A|A counts as well.
    """
    return _relative_constraint(A.values, A.grid, waves(A.grid), harmonic)


def _line_search(V, W, f0, slope, cell, armijo=1e-4, max_halvings=40):
    """Armijo backtracking along V - αW, starting from a Newton step on the
    convex 1-D restriction of ∫|V - αW|^3."""
    alpha = 0.0
    for _ in range(4):
        U = V - alpha * W
        mag = np.sqrt(np.sum(U**2, axis=0))
        uw = np.sum(U * W, axis=0)
        d1 = -3.0 * np.sum(mag * uw) * cell
        with np.errstate(divide="ignore", invalid="ignore"):
            d2 = 3.0 * np.sum(mag * np.sum(W**2, axis=0) + np.where(mag > 0, uw**2 / mag, 0.0)) * cell
        if not (np.isfinite(d1) and np.isfinite(d2)):
            raise GaugeSolverError("non-finite derivative in gauge line search")
        if d2 <= 0:
            break
        step = -d1 / d2
        alpha += step
        if abs(step) <= 1e-10 * max(abs(alpha), 1e-300):
            break
    if not alpha > 0:
        alpha = 1.0
    for _ in range(max_halvings):
        U = V - alpha * W
        f = float(np.sum(np.sqrt(np.sum(U**2, axis=0)) ** 3) * cell)
        if not np.isfinite(f):
            raise GaugeSolverError(f"NaN in gauge line search at step {alpha:.3e}")
        if f <= f0 + armijo * alpha * slope:
            return alpha, U, f
        alpha *= 0.5
    return 0.0, V, f0


def _solve(A: VectorField, tol: float, max_iter: int, phi_init=None, restart: int = 50,
           harmonic: bool = False) -> GaugeResult:
    if not tol > 0:
        raise ValueError("tol must be positive")
    g = A.grid
    w = waves(g)
    cell = g.cell_volume
    a = A.values
    if phi_init is None:
        phih = spectral.leray_hat(rfft3(a), w)[1]
    else:
        phih = rfft3(np.asarray(phi_init.values if isinstance(phi_init, ScalarField) else phi_init))
    const = np.zeros(3)
    V = a - irfft3(grad_hat(phih, w), g.n)

    def fval(V):
        return float(np.sum(np.sqrt(np.sum(V**2, axis=0)) ** 3) * cell)

    def result(V, F, cres, it, converged, history):
        return GaugeResult(ScalarField(g, irfft3(phih, g.n)), VectorField(g, V), F ** (1.0 / 3.0),
                           cres, it, converged, history, const.copy())

    F = fval(V)
    history = [F]
    if F == 0.0:
        return result(V, 0.0, 0.0, 0, True, history)

    # Work in field space: dF/dφ = 3 div(|V|V), and the gradient preconditioned
    # by (-div∘grad)^{-1} corresponds to Z, the projection of |V|V onto
    # gradients (and constants).  Moving φ along the potential of Z moves V
    # along -Z.
    D = dpot = dc = None
    prev = None
    converged = False
    it = 0
    while True:
        mag = np.sqrt(np.sum(V**2, axis=0))
        P = mag * V
        Z, zpot, zc = _exact_part(P, g, w, harmonic)
        res = _l32(Z, g) / F ** (2 / 3)
        if res < tol:
            converged = True
            break
        if it >= max_iter:
            break
        zz = float(np.sum(Z * Z))
        if D is None or it % restart == 0 or prev is None:
            D, dpot, dc = Z, zpot, zc
        else:
            Z_prev, zz_prev = prev
            beta = max(0.0, float(np.sum(Z * (Z - Z_prev))) / zz_prev)
            D, dpot, dc = Z + beta * D, zpot + beta * dpot, zc + beta * dc
        # slope of F along V - αD is -3⟨P, D⟩; restart on a non-descent direction
        pd = float(np.sum(P * D))
        if pd <= 0:
            D, dpot, dc = Z, zpot, zc
            pd = zz
        alpha, V_new, F_new = _line_search(V, D, F, -3.0 * pd * cell, cell)
        if alpha == 0.0:
            log.info("gauge line search stalled at iteration %d (residual %.3e)", it, res)
            break
        phih = phih + alpha * dpot
        const = const + alpha * dc
        V = V_new
        if F_new > F * (1 + 1e-12):
            raise GaugeSolverError("objective increased on an accepted step")
        F = F_new
        history.append(F)
        prev = (Z, zz)
        it += 1

    if not converged:
        log.warning("gauge solver stopped after %d iterations, residual %.3e", it, res)
    return result(V, F, _relative_constraint(V, g, w, harmonic), it, converged, history)


def seminorm3(A: VectorField, tol: float = 1e-7, max_iter: int = 2000, phi_init=None,
              harmonic: bool = False) -> GaugeResult:
    """|||A|||_3 = inf over mean-free φ of ‖A - ∇φ‖_3.

    With ``harmonic`` the infimum also runs over constant vectors c, the
    harmonic 1-forms of the torus: ‖A - ∇φ - c‖_3.  On a periodic box a
    constant is not a gradient, and a nonzero box mean of A otherwise biases
    the seminorm upward relative to whole space.
    """
    return _solve(A, tol, max_iter, phi_init, harmonic=harmonic)


def gauge_fix(A: VectorField, tol: float = 1e-7, max_iter: int = 2000, phi_init=None,
              harmonic: bool = False) -> GaugeResult:
    """Representative A - ∇φ₀ with div(|A - ∇φ₀|(A - ∇φ₀)) = 0.

    Starts from the linear Coulomb gauge unless ``phi_init`` is given.  With
    ``harmonic`` the representative is A - ∇φ₀ - c and |A'|A' is also mean free.
    """
    return _solve(A, tol, max_iter, phi_init, harmonic=harmonic)


@dataclass
class StabilityReport:
    ratio: float
    numerator: float
    denominator: float
    converged: bool


def gauge_stability(A1: VectorField, A2: VectorField, tol: float = 1e-7, max_iter: int = 2000) -> StabilityReport:
    """r = ‖∇φ₁ - ∇φ₂‖_3² / (‖A₁ - A₂‖_3 (‖A₁‖_3 + ‖A₂‖_3))."""
    r1 = gauge_fix(A1, tol, max_iter)
    r2 = gauge_fix(A2, tol, max_iter)
    num = lp_norm(spectral.gradient(r1.phi0 - r2.phi0), 3) ** 2
    den = lp_norm(A1 - A2, 3) * (lp_norm(A1, 3) + lp_norm(A2, 3))
    ratio = 0.0 if den == 0.0 else num / den
    return StabilityReport(ratio, num, den, r1.converged and r2.converged)


# --- local L^2 seminorm on a sub-box ----------------------------------------

@dataclass(frozen=True)
class SubBox:
    """Node index ranges ``lo[i] <= idx < hi[i]`` of an axis-aligned sub-box."""

    lo: tuple
    hi: tuple

    def shape(self) -> tuple:
        return tuple(h - l for l, h in zip(self.lo, self.hi))


def _edge_gradient(shape) -> sparse.csr_matrix:
    """Nodes → edges difference operator (unit spacing) on a box of nodes."""
    blocks = []
    for ax in range(3):
        ops = [sparse.identity(m, format="csr") for m in shape]
        m = shape[ax]
        ops[ax] = sparse.diags([-np.ones(m - 1), np.ones(m - 1)], [0, 1], shape=(m - 1, m), format="csr")
        blocks.append(sparse.kron(sparse.kron(ops[0], ops[1]), ops[2], format="csr"))
    return sparse.vstack(blocks, format="csr")


def _edge_curl_transpose(shape) -> sparse.csr_matrix:
    """Faces → edges operator whose range is the discrete divergence-free,
    zero-normal-flux space (kernel of the edge gradient's transpose)."""
    def d(m):
        return sparse.diags([-np.ones(m - 1), np.ones(m - 1)], [0, 1], shape=(m - 1, m), format="csr")

    def eye(m):
        return sparse.identity(m, format="csr")

    def kron3(a, b, c):
        return sparse.kron(sparse.kron(a, b), c, format="csr")

    mx, my, mz = shape
    # edge spaces: x-edges (mx-1,my,mz), y-edges (mx,my-1,mz), z-edges (mx,my,mz-1)
    # face spaces: xy-faces (mx-1,my-1,mz), yz-faces (mx,my-1,mz-1), zx-faces (mx-1,my,mz-1)
    # boundary of face → edges, as matrices edges × faces
    zero = None
    # xy face: +x edge at y, +y edge at x+1, -x edge at y+1, -y edge at x
    xy_to_x = kron3(eye(mx - 1), -d(my).T, eye(mz))
    xy_to_y = kron3(d(mx).T, eye(my - 1), eye(mz))
    yz_to_y = kron3(eye(mx), eye(my - 1), -d(mz).T)
    yz_to_z = kron3(eye(mx), d(my).T, eye(mz - 1))
    zx_to_z = kron3(-d(mx).T, eye(my), eye(mz - 1))
    zx_to_x = kron3(eye(mx - 1), eye(my), d(mz).T)
    return sparse.bmat(
        [
            [xy_to_x, zero, zx_to_x],
            [xy_to_y, yz_to_y, zero],
            [zero, yz_to_z, zx_to_z],
        ],
        format="csr",
    )


def _edge_values(A: VectorField, box: SubBox) -> np.ndarray:
    """Edge-midpoint samples of A (component along the edge), stacked x, y, z."""
    sl = tuple(slice(l, h) for l, h in zip(box.lo, box.hi))
    out = []
    for ax in range(3):
        comp = A.values[ax][sl]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        out.append(0.5 * (comp[tuple(lo)] + comp[tuple(hi)]).ravel())
    return np.concatenate(out)


@dataclass
class LocalSeminormResult:
    primal: float
    dual: float
    gap: float
    phi: np.ndarray


def local_seminorm2_edges(a: np.ndarray, shape, h: float, check_gap: float | None = 1e-8) -> LocalSeminormResult:
    """min_φ ‖a - Gφ‖ for an edge field ``a`` on a box of nodes, plus the dual
    value max{⟨a, B⟩ : ‖B‖ ≤ 1, GᵀB = 0} computed through the curl range."""
    G = _edge_gradient(shape) / h
    weight = h**3
    lap = (G.T @ G).tocsr()
    rhs = G.T @ a
    # Neumann system: pin node 0, solve, then remove the mean
    keep = np.arange(1, lap.shape[0])
    phi = np.zeros(lap.shape[0])
    if keep.size:
        phi[keep] = splinalg.spsolve(lap[keep][:, keep].tocsc(), rhs[keep])
    phi -= phi.mean()
    resid = a - G @ phi
    primal = float(np.sqrt(weight * resid @ resid))

    C = _edge_curl_transpose(shape)
    if C.shape[1]:
        sol = splinalg.lsqr(C, a, atol=1e-15, btol=1e-15, iter_lim=20 * C.shape[1])[0]
        proj = C @ sol
    else:
        proj = np.zeros_like(a)
    nrm = float(np.sqrt(weight * proj @ proj))
    dual = float(weight * a @ proj / nrm) if nrm > 0 else 0.0
    scale = max(primal, dual)
    gap = abs(primal - dual) / scale if scale > 0 else 0.0
    if check_gap is not None and gap > check_gap:
        raise GaugeSolverError(f"duality gap {gap:.3e} exceeds {check_gap:.1e}")
    return LocalSeminormResult(primal, dual, gap, phi)


def local_seminorm2(A: VectorField, box: SubBox | None = None, check_gap: float | None = 1e-8) -> LocalSeminormResult:
    """|||A|||_{2Ω} on an axis-aligned sub-box Ω of grid nodes (non-periodic).

    Edges carry the midpoint average of the tangential component of A; the
    minimisation over φ is the Neumann Poisson problem GᵀGφ = Gᵀa.
    """
    n = A.grid.n
    if box is None:
        box = SubBox((0, 0, 0), (n, n, n))
    if any(l < 0 or h > n or h - l < 2 for l, h in zip(box.lo, box.hi)):
        raise ValueError("sub-box must lie within the grid and span ≥ 2 nodes per axis")
    return local_seminorm2_edges(_edge_values(A, box), box.shape(), A.grid.h, check_gap)


# --- mollification defect ---------------------------------------------------

@dataclass
class MollifyReport:
    eps: float
    defect: float
    ratio: float


def mollify_defect(A: VectorField, eps: float) -> MollifyReport:
    """d(ε) = |||A - η_ε⋆A|||_2 over the periodic box, η the unit-mass Gaussian
    heat kernel at time 1, so that η_ε⋆ = e^{ε²Δ}.  The L^2 seminorm on the
    torus is the norm of the divergence-free part."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    g = A.grid
    w = waves(g)
    diff_h = rfft3(A.values) * (1.0 - np.exp(-(eps**2) * w.k2))
    proj, _ = spectral.leray_hat(diff_h, w)
    d = spectral.parseval_norm(g, proj)
    b = lp_norm(spectral.curl(A), 1.5)
    ratio = d / (np.sqrt(eps) * b) if b > 0 else 0.0
    return MollifyReport(eps, d, ratio)
