"""Pseudo-spectral differential and integral operators on the periodic cube.

Real fields go through ``rfftn``/``irfftn``, which enforces conjugate symmetry
of the spectrum so every output is real by construction.  First-order
multipliers ``ik`` drop the Nyquist frequency; this keeps the discrete
gradient exactly skew-adjoint to the discrete divergence, so that
``div∘curl`` and ``curl∘grad`` vanish to rounding error.  Second-order
multipliers (Laplacian, heat) keep the full ``|k|^2``.
"""

from __future__ import annotations

import logging
import os
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .fields import Grid, ScalarField, SpinorField, VectorField, _Field

log = logging.getLogger(__name__)

_AXES = (-3, -2, -1)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("CURLSOB_THREADS", "1")))
    except ValueError:
        return 1


def rfft3(a: np.ndarray) -> np.ndarray:
    return sfft.rfftn(a, axes=_AXES, workers=_workers())


def irfft3(a: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfftn(a, s=(n, n, n), axes=_AXES, workers=_workers())


def fft3(a: np.ndarray) -> np.ndarray:
    return sfft.fftn(a, axes=_AXES, workers=_workers())


def ifft3(a: np.ndarray) -> np.ndarray:
    return sfft.ifftn(a, axes=_AXES, workers=_workers())


class _Waves:
    """Wavenumber arrays for one grid, broadcastable against spectra."""

    def __init__(self, grid: Grid, half: bool):
        n = grid.n
        k = grid.frequencies()
        kd = k.copy()
        kd[n // 2] = 0.0  # Nyquist
        if half:
            kl = np.abs(k[: n // 2 + 1])
            kld = kl.copy()
            kld[-1] = 0.0
        else:
            kl, kld = k, kd
        self.k = (k[:, None, None], k[None, :, None], kl[None, None, :])
        self.kd = (kd[:, None, None], kd[None, :, None], kld[None, None, :])
        self.k2 = self.k[0] ** 2 + self.k[1] ** 2 + self.k[2] ** 2
        self.kd2 = self.kd[0] ** 2 + self.kd[1] ** 2 + self.kd[2] ** 2
        with np.errstate(divide="ignore"):
            self.inv_k2 = np.where(self.k2 > 0, 1.0 / np.where(self.k2 > 0, self.k2, 1.0), 0.0)
            self.inv_kd2 = np.where(self.kd2 > 0, 1.0 / np.where(self.kd2 > 0, self.kd2, 1.0), 0.0)


@lru_cache(maxsize=16)
def waves(grid: Grid, half: bool = True) -> _Waves:
    return _Waves(grid, half)


# --- spectral-space kernels, shared by the solvers -------------------------

def curl_hat(vh: np.ndarray, w: _Waves) -> np.ndarray:
    kx, ky, kz = w.kd
    return 1j * np.stack([
        ky * vh[2] - kz * vh[1],
        kz * vh[0] - kx * vh[2],
        kx * vh[1] - ky * vh[0],
    ])


def div_hat(vh: np.ndarray, w: _Waves) -> np.ndarray:
    kx, ky, kz = w.kd
    return 1j * (kx * vh[0] + ky * vh[1] + kz * vh[2])


def grad_hat(fh: np.ndarray, w: _Waves) -> np.ndarray:
    return 1j * np.stack([w.kd[0] * fh, w.kd[1] * fh, w.kd[2] * fh])


# --- field-level operators ---------------------------------------------------

def curl(V: VectorField) -> VectorField:
    w = waves(V.grid)
    return VectorField(V.grid, irfft3(curl_hat(rfft3(V.values), w), V.grid.n))


def divergence(V: VectorField) -> ScalarField:
    w = waves(V.grid)
    return ScalarField(V.grid, irfft3(div_hat(rfft3(V.values), w), V.grid.n))


def gradient(f: ScalarField) -> VectorField:
    w = waves(f.grid)
    return VectorField(f.grid, irfft3(grad_hat(rfft3(f.values), w), f.grid.n))


def laplacian(f: _Field) -> _Field:
    w = waves(f.grid)
    return type(f)(f.grid, irfft3(-w.k2 * rfft3(f.values), f.grid.n))


def inverse_laplacian(f: _Field, return_mean: bool = False):
    """Solve ``-Δu = f - mean(f)`` with mean-free ``u`` (multiplier ``1/|k|^2``).

    The removed mean is logged; with ``return_mean`` it is also returned.
    """
    w = waves(f.grid)
    fh = rfft3(f.values)
    removed = fh[..., 0, 0, 0].real / f.grid.n**3
    if np.any(np.abs(removed) > 0):
        log.debug("inverse_laplacian removed mean %s", removed)
    out = type(f)(f.grid, irfft3(w.inv_k2 * fh, f.grid.n))
    return (out, removed) if return_mean else out


def heat(f: _Field, t: float) -> _Field:
    """Heat semigroup e^{tΔ}: multiplier exp(-t|k|^2)."""
    if not t >= 0:
        raise ValueError("heat time must be ≥ 0")
    if t == 0:
        return f
    if isinstance(f, SpinorField):
        w = waves(f.grid, half=False)
        return SpinorField(f.grid, ifft3(np.exp(-t * w.k2) * fft3(f.values)))
    w = waves(f.grid)
    return type(f)(f.grid, irfft3(np.exp(-t * w.k2) * rfft3(f.values), f.grid.n))


def biot_savart(B: VectorField, return_residual: bool = False):
    """Coulomb-gauge vector potential with curl B (multiplier ``i k∧B̂/|k|^2``).

    The relative divergence of the input is logged and optionally returned;
    the divergence-carrying part of ``B`` is not representable as a curl and
    is silently lost.
    """
    w = waves(B.grid)
    bh = rfft3(B.values)
    dh = div_hat(bh, w)
    scale = np.sqrt(np.sum(w.kd2 * np.sum(np.abs(bh) ** 2, axis=0)))
    residual = float(np.sqrt(np.sum(np.abs(dh) ** 2)) / scale) if scale > 0 else 0.0
    if residual > 1e-8:
        log.info("biot_savart input has relative divergence %.3e", residual)
    out = VectorField(B.grid, irfft3(curl_hat(bh, w) * w.inv_kd2, B.grid.n))
    return (out, residual) if return_residual else out


def leray_hat(vh: np.ndarray, w: _Waves) -> tuple[np.ndarray, np.ndarray]:
    """Split a vector spectrum into its divergence-free part and the potential φ̂
    with ``v = P v + ∇φ``."""
    phih = -div_hat(vh, w) * w.inv_kd2
    return vh - grad_hat(phih, w), phih


def negative_order_norm(V: _Field, s: float = 0.5) -> float:
    """‖(-Δ)^{-s} V‖_2 with the zero mode dropped."""
    w = waves(V.grid)
    vh = rfft3(V.values)
    mult = w.inv_k2**s
    return parseval_norm(V.grid, mult * vh)


def parseval_norm(grid: Grid, vh: np.ndarray) -> float:
    """L^2 norm of a real field from its half spectrum."""
    n = grid.n
    weights = np.full(n // 2 + 1, 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    total = np.sum(np.abs(vh) ** 2 * weights)
    return float(np.sqrt(total * grid.cell_volume / n**3))


def lowpass(V: _Field, fraction: float = 2.0 / 3.0) -> _Field:
    """Zero every mode with some |k_j| above ``fraction`` of the Nyquist frequency."""
    g = V.grid
    w = waves(g)
    kmax = fraction * np.pi * g.n / (2 * g.L)
    mask = (np.abs(w.k[0]) <= kmax) & (np.abs(w.k[1]) <= kmax) & (np.abs(w.k[2]) <= kmax)
    return type(V)(g, irfft3(rfft3(V.values) * mask, g.n))


def refine(V: _Field, n: int) -> _Field:
    """Band-limited interpolation of a real field onto the same box with n ≥
    V.grid.n points per axis (zero padding; the coarse Nyquist mode is dropped)."""
    g = V.grid
    if n < g.n or n % 2:
        raise ValueError("target n must be even and not below the source n")
    fine = Grid(n, g.L)
    m = g.n
    vh = sfft.fftn(V.values, axes=(-3, -2, -1), workers=_workers())
    out = np.zeros(vh.shape[:-3] + (n, n, n), dtype=complex)
    keep = np.r_[0:m // 2, n - m // 2 + 1:n]
    src = np.r_[0:m // 2, m // 2 + 1:m]
    out[(..., *np.ix_(keep, keep, keep))] = vh[(..., *np.ix_(src, src, src))]
    vals = sfft.ifftn(out, axes=(-3, -2, -1), workers=_workers()).real * (n / m) ** 3
    return type(V)(fine, vals)


def _interp_matrix(grid: Grid, points: np.ndarray) -> np.ndarray:
    """Rows evaluate the band-limited periodic interpolant at ``points``.

    The Nyquist mode is split symmetrically so real data stays real.
    """
    n = grid.n
    k = grid.frequencies()
    xs = grid.axis
    phase = np.exp(1j * np.outer(points, k))  # (m, n)
    coef = np.exp(-1j * np.outer(k, xs)) / n  # (n, n) forward DFT
    coef[n // 2] *= 0.5
    nyq = 0.5 * np.exp(1j * np.outer(points, -k[n // 2])) @ (np.exp(1j * k[n // 2] * xs)[None, :] / n)
    return (phase @ coef + nyq).real


def resample_affine(V: _Field, scale: float, shift, outside_zero: bool = True) -> _Field:
    """Trigonometric resampling of ``x ↦ V(scale·x + shift)`` on the same grid.

    Each axis is handled by a dense interpolation matrix, so the map must be
    axis-separable.  Source points falling outside the box give zero when
    ``outside_zero`` (the field is taken to vanish outside the box), otherwise
    they wrap periodically.
    """
    g = V.grid
    shift = np.broadcast_to(np.asarray(shift, dtype=float), (3,))
    mats = []
    for ax in range(3):
        src = scale * g.axis + shift[ax]
        if not outside_zero:
            src = (src + g.L) % (2 * g.L) - g.L
        m = _interp_matrix(g, src)
        if outside_zero:
            m[(src < -g.L) | (src > g.L - g.h)] = 0.0
        mats.append(m)
    vals = V.values
    out = np.einsum("ia,...abc->...ibc", mats[0], vals)
    out = np.einsum("jb,...ibc->...ijc", mats[1], out)
    out = np.einsum("kc,...ijc->...ijk", mats[2], out)
    return type(V)(g, out)
