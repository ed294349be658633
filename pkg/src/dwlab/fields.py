"""Uniform periodic grids, spectral calculus and the reference Gaussians.

A field is a plain real ``numpy`` array of shape ``(N,)*n`` sampled at
``x_j = -L + j*h`` on ``[-L, L)^n``.  Spectral coefficients use the
normalization ``c = fftn(f) / N**n`` so that

    f(x) = sum_k c_k exp(i xi_k (x + L)),   xi_k = pi k / L,

and Parseval reads ``||f||_{L^2}^2 = (2L)^n sum_k |c_k|^2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Periodic box ``[-L, L)^n`` with ``N`` points per axis."""

    n: int
    L: float
    N: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {self.n}")
        if self.L <= 0:
            raise ValueError(f"half-width L must be positive, got {self.L}")
        if self.N < 16 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 16, got {self.N}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    @cached_property
    def x(self) -> np.ndarray:
        """1D coordinate vector shared by every axis."""
        return -self.L + self.h * np.arange(self.N)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.x] * self.n), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.coords))

    @cached_property
    def xi1d(self) -> np.ndarray:
        """Angular wavenumbers of one axis in FFT order."""
        return np.pi * np.fft.fftfreq(self.N, d=1.0 / self.N) / self.L

    @cached_property
    def xi(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.xi1d] * self.n), indexing="ij"))

    @cached_property
    def xi_deriv(self) -> tuple[np.ndarray, ...]:
        # Nyquist mode has no odd-derivative partner; zero it.
        k = self.xi1d.copy()
        k[self.N // 2] = 0.0
        return tuple(np.meshgrid(*([k] * self.n), indexing="ij"))

    @cached_property
    def xi_sq(self) -> np.ndarray:
        return sum(k**2 for k in self.xi)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep modes with |k_i| < N/3 on every axis."""
        kint = np.abs(np.fft.fftfreq(self.N, d=1.0 / self.N))
        keep = kint < self.N / 3.0
        mask = keep
        for _ in range(self.n - 1):
            mask = np.multiply.outer(mask, keep)
        return mask

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.fftn(f) / self.N**self.n

    def ifft(self, c: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifftn(c * self.N**self.n))

    def gradient(self, f: np.ndarray) -> list[np.ndarray]:
        c = self.fft(f)
        return [self.ifft(1j * k * c) for k in self.xi_deriv]

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(-self.xi_sq * self.fft(f))

    def integrate(self, f: np.ndarray) -> float:
        return float(self.cell_volume * np.sum(f))

    def l2(self, f: np.ndarray) -> float:
        return float(np.sqrt(self.cell_volume * np.sum(np.abs(f) ** 2)))

    def weighted_norm(self, f: np.ndarray, k: int, m: float) -> float:
        """``sum_{|a|<=k} ||(1+|y|)^m d^a f||_{L^2}`` for k in {0, 1}."""
        if k not in (0, 1):
            raise ValueError("weighted_norm supports k = 0 or 1")
        if m < 0:
            raise ValueError("weight exponent m must be nonnegative")
        weight = (1.0 + self.radius) ** m
        total = self.l2(weight * f)
        if k == 1:
            total += sum(self.l2(weight * d) for d in self.gradient(f))
        return total

    def parseval_norm(self, c: np.ndarray) -> float:
        return float(np.sqrt((2.0 * self.L) ** self.n * np.sum(np.abs(c) ** 2)))

    def _eval_matrix(self, pts: np.ndarray) -> np.ndarray:
        shift = np.asarray(pts, dtype=float)[:, None] + self.L
        mat = np.exp(1j * shift * self.xi1d[None, :])
        # real interpolant: the Nyquist coefficient stands for a cosine
        nyq = self.N // 2
        mat[:, nyq] = np.cos(shift[:, 0] * self.xi1d[nyq])
        return mat

    def evaluate(self, c: np.ndarray, axis_points: np.ndarray) -> np.ndarray:
        """Evaluate the trigonometric interpolant on a tensor grid of points.

        ``axis_points`` is the same 1D coordinate list on every axis.
        """
        mat = self._eval_matrix(axis_points)
        if self.n == 1:
            return np.real(mat @ c)
        return np.real(mat @ c @ mat.T)


def gaussian_phi0(grid: Grid) -> np.ndarray:
    """Normalized Gaussian ``(4 pi)^{-n/2} exp(-|y|^2/4)``."""
    return (4.0 * np.pi) ** (-grid.n / 2) * np.exp(-(grid.radius**2) / 4.0)


def psi0(grid: Grid) -> np.ndarray:
    """Analytic Laplacian of ``phi0``: ``(|y|^2/4 - n/2) phi0``."""
    r2 = grid.radius**2
    return (r2 / 4.0 - grid.n / 2.0) * gaussian_phi0(grid)


def grad_phi0(grid: Grid) -> list[np.ndarray]:
    phi = gaussian_phi0(grid)
    return [-0.5 * y * phi for y in grid.coords]


def grad_psi0(grid: Grid) -> list[np.ndarray]:
    r2 = grid.radius**2
    factor = 0.5 * (1.0 + grid.n / 2.0 - r2 / 4.0) * gaussian_phi0(grid)
    return [y * factor for y in grid.coords]


def heat_gaussian(grid: Grid, tau: float) -> np.ndarray:
    """Heat kernel ``(4 pi tau)^{-n/2} exp(-|x|^2 / (4 tau))``."""
    if tau <= 0:
        raise ValueError(f"heat kernel time must be positive, got {tau}")
    return (4.0 * np.pi * tau) ** (-grid.n / 2) * np.exp(-(grid.radius**2) / (4.0 * tau))


def gn_check(grid: Grid, f: np.ndarray, p: float) -> dict:
    """Both sides of the Gagliardo-Nirenberg inequality ``||f||_{2p} <= C ||grad f||^s ||f||^{1-s}``."""
    n = grid.n
    if not (p > 1 and (n <= 2 or p <= n / (n - 2))):
        raise ValueError(f"exponent p={p} outside the admissible range for n={n}")
    sigma = n * (p - 1) / (2 * p)
    lhs = float((grid.cell_volume * np.sum(np.abs(f) ** (2 * p))) ** (1 / (2 * p)))
    grad_l2 = float(np.sqrt(sum(grid.l2(d) ** 2 for d in grid.gradient(f))))
    rhs = grad_l2**sigma * grid.l2(f) ** (1 - sigma)
    return {"lhs": lhs, "rhs_factor": rhs, "sigma": sigma}


def save_fields(stem: Path, grid: Grid, arrays: dict[str, np.ndarray], **meta) -> None:
    """Write ``stem.bin`` (little-endian float64, row-major, arrays in order) and a ``stem.json`` sidecar."""
    stem = Path(stem)
    names = list(arrays)
    data = np.concatenate([np.ascontiguousarray(arrays[k], dtype="<f8").ravel() for k in names])
    stem.with_suffix(".bin").write_bytes(data.tobytes())
    sidecar = {"n": grid.n, "L": grid.L, "N": grid.N, "fields": names, **meta}
    stem.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True))


def load_fields(stem: Path) -> tuple[Grid, dict[str, np.ndarray], dict]:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    grid = Grid(meta["n"], meta["L"], meta["N"])
    raw = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8")
    size = grid.N**grid.n
    if raw.size != size * len(meta["fields"]):
        raise ValueError(f"{stem}: expected {size * len(meta['fields'])} samples, found {raw.size}")
    arrays = {
        name: raw[i * size:(i + 1) * size].reshape(grid.shape).copy()
        for i, name in enumerate(meta["fields"])
    }
    return grid, arrays, meta
