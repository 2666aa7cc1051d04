"""Classical Toeplitz symbols on the circle: winding, factorization, kernel counts.

For a nonvanishing trigonometric polynomial phi the index identity
ind T_phi = dim ker - dim coker = -winding(phi) is verified constructively:
the winding comes from the FFT argument principle, and the kernel/cokernel
dimensions from a numerical Wiener-Hopf factorization
phi = z^w exp(l_+) exp(l_-), whose analytic factor furnishes an explicit
kernel basis that is checked against the Hardy-space projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import JointflowError, SymbolVanishesError

DEFAULT_GRID = 4096


def symbol_values(coeffs, grid=DEFAULT_GRID):
    """Evaluate sum_k c_k z^k on the uniform grid z = exp(2 pi i j / grid)."""
    vals = np.zeros(grid, dtype=complex)
    z = np.exp(2j * np.pi * np.arange(grid) / grid)
    for k, c in coeffs.items():
        vals += c * z ** int(k)
    return vals


def check_nonvanishing(coeffs, grid=DEFAULT_GRID, floor=1e-8):
    vals = symbol_values(coeffs, grid)
    mags = np.abs(vals)
    j = int(np.argmin(mags))
    if mags[j] <= floor:
        raise SymbolVanishesError(
            f"symbol magnitude {mags[j]:.3e} at angle {2 * np.pi * j / grid:.4f} "
            f"is below the floor {floor:.1e}",
            location=2 * np.pi * j / grid,
            value=complex(vals[j]),
        )
    return vals


def winding_number(vals):
    """Argument principle on the grid: summed phase increments over 2 pi."""
    ratios = vals[np.r_[1 : len(vals), 0]] / vals
    total = float(np.sum(np.angle(ratios)))
    w = total / (2.0 * np.pi)
    w_int = int(np.round(w))
    if abs(w - w_int) > 1e-6:
        raise JointflowError(
            f"winding did not round cleanly: {w:.8f} (grid too coarse for this symbol?)"
        )
    return w_int


@dataclass(frozen=True)
class WienerHopfReport:
    winding: int
    dim_ker: int
    dim_coker: int
    index: int
    factorization_residual: float
    kernel_residual: float
    symbol_min: float

    def as_dict(self):
        return {
            "winding": int(self.winding),
            "dim_ker": int(self.dim_ker),
            "dim_coker": int(self.dim_coker),
            "index": int(self.index),
            "factorization_residual": float(self.factorization_residual),
            "kernel_residual": float(self.kernel_residual),
            "symbol_min": float(self.symbol_min),
        }


def _continuous_log(vals, w, grid):
    """log(phi z^-w) with the phase unwrapped into a periodic branch."""
    z = np.exp(2j * np.pi * np.arange(grid) / grid)
    detwisted = vals * z ** (-w)
    phase = np.unwrap(np.angle(detwisted))
    return np.log(np.abs(detwisted)) + 1j * phase


def _analytic_split(g):
    """Fourier split of g into constant+analytic and anti-analytic parts."""
    grid = len(g)
    ghat = np.fft.fft(g) / grid
    freqs = np.fft.fftfreq(grid, d=1.0 / grid).astype(int)
    plus = np.where(freqs >= 0, ghat, 0.0)
    minus = np.where(freqs < 0, ghat, 0.0)
    lp = np.fft.ifft(plus * grid)
    lm = np.fft.ifft(minus * grid)
    return lp, lm


def _hardy_projection_residual(phi_vals, f_vals, grid):
    """|| P_+ (phi f) || relative to ||f||, all on the mode window."""
    prod = phi_vals * f_vals
    phat = np.fft.fft(prod) / grid
    freqs = np.fft.fftfreq(grid, d=1.0 / grid).astype(int)
    # Keep a safety margin below the Nyquist edge to avoid aliasing artifacts.
    window = (freqs >= 0) & (freqs < grid // 4)
    num = float(np.linalg.norm(phat[window]))
    den = float(np.linalg.norm(np.fft.fft(f_vals) / grid))
    return num / max(den, 1e-300)


def toeplitz_matrix(coeffs, n):
    """Finite section (T_phi)_{jk} = c_{j-k}, 0 <= j, k < n."""
    m = np.zeros((n, n), dtype=complex)
    for k, c in coeffs.items():
        k = int(k)
        if abs(k) < n:
            idx = np.arange(n - abs(k))
            if k >= 0:
                m[idx + k, idx] = c
            else:
                m[idx, idx - k] = c
    return m


def _kernel_dimension(coeffs, vals, w, grid, residual_tol=1e-7):
    """dim ker T_phi via the factorization, with explicit residual checks.

    Only |w|-many candidates z^j exp(-l_+) exist for w < 0; each is verified
    to be annihilated by the Hardy projection, and a finite section confirms
    no further near-kernel directions.
    """
    if w >= 0:
        return 0, 0.0
    g = _continuous_log(vals, w, grid)
    lp, lm = _analytic_split(g)
    z = np.exp(2j * np.pi * np.arange(grid) / grid)
    recon = z**w * np.exp(lp) * np.exp(lm)
    fact_res = float(np.max(np.abs(recon - vals)) / np.max(np.abs(vals)))
    if fact_res > 1e-6:
        raise JointflowError(
            f"Wiener-Hopf factorization residual {fact_res:.2e} too large"
        )
    worst = 0.0
    base = np.exp(-lp)
    for j in range(-w):
        worst = max(worst, _hardy_projection_residual(vals, base * z**j, grid))
    if worst > residual_tol:
        raise JointflowError(
            f"candidate kernel vector fails the projection test: residual {worst:.2e}"
        )
    # Cross-check: the finite section has exactly |w| decaying singular values.
    n_sec = 96
    svals = np.linalg.svd(toeplitz_matrix(coeffs, n_sec), compute_uv=False)
    n_small = int(np.sum(svals < residual_tol * 10))
    if n_small != -w:
        raise JointflowError(
            f"finite section shows {n_small} near-kernel directions, expected {-w}"
        )
    return -w, worst


def wiener_hopf(coeffs, grid=DEFAULT_GRID, floor=1e-8):
    """Winding plus kernel/cokernel dimensions of T_phi, fully verified."""
    coeffs = {int(k): complex(c) for k, c in coeffs.items()}
    vals = check_nonvanishing(coeffs, grid, floor)
    w = winding_number(vals)

    g = _continuous_log(vals, w, grid)
    lp, lm = _analytic_split(g)
    z = np.exp(2j * np.pi * np.arange(grid) / grid)
    recon = z**w * np.exp(lp) * np.exp(lm)
    fact_res = float(np.max(np.abs(recon - vals)) / np.max(np.abs(vals)))

    dim_ker, res_ker = _kernel_dimension(coeffs, vals, w, grid)
    # T_phi^* = T_{conj phi}: the cokernel is the adjoint's kernel.
    conj_coeffs = {-k: np.conj(c) for k, c in coeffs.items()}
    conj_vals = np.conj(vals)
    dim_coker, res_coker = _kernel_dimension(conj_coeffs, conj_vals, -w, grid)

    return WienerHopfReport(
        winding=w,
        dim_ker=dim_ker,
        dim_coker=dim_coker,
        index=dim_ker - dim_coker,
        factorization_residual=fact_res,
        kernel_residual=max(res_ker, res_coker),
        symbol_min=float(np.min(np.abs(vals))),
    )


def holonomy_from_symbol(coeffs, grid=DEFAULT_GRID, floor=1e-8, mode_cut=96):
    """Smooth lift theta with theta(1) - theta(0) = -winding(phi).

    theta(x) = -(continuous argument of phi at angle 2 pi x) / 2 pi, evaluated
    through the trigonometric interpolant of the periodic log branch, so the
    holonomy family diag(k + theta(x)) has flow -winding = ind T_phi.
    """
    coeffs = {int(k): complex(c) for k, c in coeffs.items()}
    vals = check_nonvanishing(coeffs, grid, floor)
    w = winding_number(vals)
    g = _continuous_log(vals, w, grid)
    ghat = np.fft.fft(g) / grid
    freqs = np.fft.fftfreq(grid, d=1.0 / grid).astype(int)
    keep = np.abs(freqs) <= mode_cut
    ks = freqs[keep]
    cs = ghat[keep]

    def theta(x):
        phase = np.imag(np.sum(cs * np.exp(2j * np.pi * ks * x)))
        return -(w * x + phase / (2.0 * np.pi))

    return theta, w
