"""Periodic grids, spectral transforms, multipliers, and norms.

The domain is the unit torus [0, 1)^N with N in {1, 2}, so wavevectors are
k = 2*pi*m for integer mode vectors m.  All fields are real samples on a
uniform lattice; the spectral representation is the full complex FFT layout
normalized so that f(x) = sum_m c_m exp(i k_m . x).  Quadratic nonlinearities
are dealiased by 3/2 zero padding; non-polynomial pointwise maps are evaluated
on the padded grid (aliasing reduced, not eliminated).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FractionalExponent",
    "Grid",
    "Field",
    "VectorField",
    "fractional_laplacian",
    "spectral_power",
    "gradient",
    "divergence",
    "laplacian",
    "dealiased_product",
    "dealiased_apply",
    "sobolev_norm",
    "sup_norm",
    "holder_proxy",
    "l2_norm",
    "integral",
]

# ``C^1`` monitors are evaluated at 1 + HOLDER_C1_SHIFT to keep the exponent
# strictly inside the admissible range of the proxy.
HOLDER_C1_SHIFT = 1e-3


@dataclass(frozen=True)
class FractionalExponent:
    """Order parameter of the singular alignment kernel, strictly in (0, 1)."""

    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not (0.0 < a < 1.0):
            raise ValueError(f"alpha must lie in the open interval (0, 1), got {a}")
        object.__setattr__(self, "alpha", a)

    def __float__(self):
        return self.alpha


def _as_alpha(alpha) -> float:
    if isinstance(alpha, FractionalExponent):
        return alpha.alpha
    return FractionalExponent(float(alpha)).alpha


class Grid:
    """Uniform periodic lattice on [0, 1)^dim with its Fourier mode set.

    n must be an even power of two with n >= 8.  Mode arrays, multiplier
    tables and the 3/2-padding maps are precomputed once and shared by all
    fields on the grid; instances are immutable.
    """

    def __init__(self, dim: int, n: int):
        if dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {dim}")
        n = int(n)
        if n < 8 or n % 2 != 0 or (n & (n - 1)) != 0:
            raise ValueError(f"n must be a power of two with n >= 8, got {n}")
        self.dim = dim
        self.n = n
        self.h = 1.0 / n
        self.shape = (n,) * dim
        self.size = n**dim
        self.n_pad = 3 * n // 2

        # integer modes per axis in FFT layout; index n/2 carries -n/2
        m = np.fft.fftfreq(n, d=1.0 / n)
        self._modes_1d = m
        axes = [m.reshape((-1,) + (1,) * (dim - 1 - a)) for a in range(dim)]
        self.k_axes = [2.0 * np.pi * ax for ax in axes]
        self.kmag2 = sum(np.broadcast_to(k, self.shape) ** 2 for k in self.k_axes)
        self.kmag2 = np.ascontiguousarray(self.kmag2)

        # derivative multipliers: i*k with the Nyquist mode zeroed (odd symbol)
        md = m.copy()
        md[n // 2] = 0.0
        axes_d = [md.reshape((-1,) + (1,) * (dim - 1 - a)) for a in range(dim)]
        self.ikd_axes = [
            np.ascontiguousarray(
                np.broadcast_to(1j * 2.0 * np.pi * ax, self.shape).astype(complex)
            )
            for ax in axes_d
        ]

        # physical coordinates of the lattice
        x = np.arange(n) * self.h
        self.coords = np.meshgrid(*([x] * dim), indexing="ij")

    def points(self):
        """Coordinate arrays of the lattice, one per axis."""
        return self.coords

    def modes(self):
        """Integer mode values along one axis, FFT layout."""
        return self._modes_1d.copy()

    def multiplier(self, lam: float) -> np.ndarray:
        """Symbol |k|^lam with the zero mode annihilated."""
        out = np.zeros(self.shape)
        nz = self.kmag2 > 0
        out[nz] = self.kmag2[nz] ** (0.5 * lam)
        return out

    # -- spectral layout helpers ------------------------------------------

    def spectrum_of(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values) / self.size

    def values_of(self, spectrum: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(spectrum).real * self.size

    def _pad_axis(self, c: np.ndarray, axis: int) -> np.ndarray:
        n, M = self.n, self.n_pad
        c0 = np.moveaxis(c, axis, 0)
        out = np.zeros((M,) + c0.shape[1:], dtype=complex)
        out[: n // 2] = c0[: n // 2]
        out[M - (n // 2 - 1):] = c0[n // 2 + 1:]
        # Nyquist content splits evenly between +-n/2 on the padded grid
        out[n // 2] = 0.5 * c0[n // 2]
        out[M - n // 2] = 0.5 * c0[n // 2]
        return np.moveaxis(out, 0, axis)

    def _truncate_axis(self, cp: np.ndarray, axis: int) -> np.ndarray:
        n, M = self.n, self.n_pad
        c0 = np.moveaxis(cp, axis, 0)
        out = np.zeros((n,) + c0.shape[1:], dtype=complex)
        out[: n // 2] = c0[: n // 2]
        out[n // 2 + 1:] = c0[M - (n // 2 - 1):]
        out[n // 2] = c0[n // 2] + c0[M - n // 2]
        return np.moveaxis(out, 0, axis)

    def pad_spectrum(self, c: np.ndarray) -> np.ndarray:
        for axis in range(self.dim):
            c = self._pad_axis(c, axis)
        return c

    def truncate_spectrum(self, cp: np.ndarray) -> np.ndarray:
        for axis in range(self.dim):
            cp = self._truncate_axis(cp, axis)
        return cp

    def padded_values(self, c: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(self.pad_spectrum(c)).real * self.n_pad**self.dim

    def spectrum_from_padded(self, vp: np.ndarray) -> np.ndarray:
        return self.truncate_spectrum(np.fft.fftn(vp) / self.n_pad**self.dim)

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.dim, self.n) == (other.dim, other.n)

    def __hash__(self):
        return hash((self.dim, self.n))

    def __repr__(self):
        return f"Grid(dim={self.dim}, n={self.n})"


class Field:
    """Real scalar grid function with a lazily cached spectrum."""

    __slots__ = ("grid", "values", "_spectrum")

    def __init__(self, grid: Grid, values: np.ndarray, spectrum: np.ndarray | None = None):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(f"non-finite field value at grid index {tuple(bad)}")
        self.grid = grid
        self.values = values
        self.values.setflags(write=False)
        self._spectrum = spectrum

    @classmethod
    def from_spectrum(cls, grid: Grid, spectrum: np.ndarray) -> "Field":
        vals = grid.values_of(spectrum)
        return cls(grid, vals, spectrum=np.asarray(spectrum, dtype=complex))

    @classmethod
    def from_function(cls, grid: Grid, func) -> "Field":
        return cls(grid, func(*grid.points()))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)))

    @property
    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            self._spectrum = self.grid.spectrum_of(self.values)
        return self._spectrum

    def mean(self) -> float:
        return float(self.values.mean())

    def __add__(self, other):
        if isinstance(other, Field):
            _check_same_grid(self, other)
            return Field(self.grid, self.values + other.values)
        return Field(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, Field):
            _check_same_grid(self, other)
            return Field(self.grid, self.values - other.values)
        return Field(self.grid, self.values - other)

    def __mul__(self, scalar):
        return Field(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __repr__(self):
        return f"Field({self.grid!r}, max|f|={np.abs(self.values).max():.3e})"


class VectorField:
    """dim scalar components on one shared grid."""

    __slots__ = ("grid", "components")

    def __init__(self, components):
        components = tuple(components)
        if not components:
            raise ValueError("VectorField needs at least one component")
        grid = components[0].grid
        for c in components[1:]:
            if c.grid != grid:
                raise ValueError("VectorField components must share one grid")
        if len(components) != grid.dim:
            raise ValueError(f"expected {grid.dim} components, got {len(components)}")
        self.grid = grid
        self.components = components

    @classmethod
    def zero(cls, grid: Grid) -> "VectorField":
        return cls([Field.constant(grid, 0.0) for _ in range(grid.dim)])

    def __getitem__(self, i: int) -> Field:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField([a + b for a, b in zip(self.components, other.components)])

    def __mul__(self, scalar) -> "VectorField":
        return VectorField([c * scalar for c in self.components])

    __rmul__ = __mul__

    def sup_norm(self) -> float:
        return max(sup_norm(c) for c in self.components)


def _check_same_grid(f: Field, g: Field):
    if f.grid != g.grid:
        raise ValueError(f"fields live on different grids: {f.grid!r} vs {g.grid!r}")


# -- multipliers and derivatives -------------------------------------------

def spectral_power(f: Field, lam: float) -> Field:
    """Apply the symbol |k|^lam (zeroth mode annihilated)."""
    if lam < 0:
        raise ValueError("spectral_power requires lam >= 0")
    out = f.spectrum * f.grid.multiplier(lam)
    return Field.from_spectrum(f.grid, out)


def fractional_laplacian(f: Field, alpha) -> Field:
    """Fractional dissipation operator with Fourier symbol |k|^(2*alpha)."""
    return spectral_power(f, 2.0 * _as_alpha(alpha))


def gradient(f: Field) -> VectorField:
    g = f.grid
    spec = f.spectrum
    return VectorField(
        [Field.from_spectrum(g, g.ikd_axes[a] * spec) for a in range(g.dim)]
    )


def divergence(v: VectorField) -> Field:
    g = v.grid
    out = np.zeros(g.shape, dtype=complex)
    for a in range(g.dim):
        out += g.ikd_axes[a] * v[a].spectrum
    return Field.from_spectrum(g, out)


def laplacian(f: Field) -> Field:
    g = f.grid
    sym = np.zeros(g.shape, dtype=complex)
    for a in range(g.dim):
        sym += g.ikd_axes[a] ** 2
    return Field.from_spectrum(g, sym * f.spectrum)


# -- dealiased products -----------------------------------------------------

def dealiased_apply(func, *fields: Field) -> Field:
    """Evaluate a pointwise map of several fields on the 3/2-padded grid.

    Quadratic aliasing vanishes exactly; higher-order and non-polynomial
    maps retain a reduced aliasing residual carried by the spectral tail.
    """
    grid = fields[0].grid
    for f in fields[1:]:
        _check_same_grid(fields[0], f)
    padded = [grid.padded_values(f.spectrum) for f in fields]
    out_p = func(*padded)
    return Field.from_spectrum(grid, grid.spectrum_from_padded(out_p))


def dealiased_product(f: Field, g: Field) -> Field:
    """Pointwise product with 3/2 zero padding (alias-free for quadratics)."""
    return dealiased_apply(lambda a, b: a * b, f, g)


# -- norms ------------------------------------------------------------------

def integral(f: Field) -> float:
    """Quadrature of f over the torus (exact for the interpolant)."""
    return float(f.values.mean())


def l2_norm(f: Field) -> float:
    return float(np.sqrt(np.mean(f.values**2)))


def sup_norm(f: Field) -> float:
    return float(np.abs(f.values).max())


def sobolev_norm(f: Field, s: float) -> float:
    """H^s norm via Plancherel: (sum_k (1+|k|^2)^s |c_k|^2)^(1/2)."""
    if s < 0:
        raise ValueError("sobolev_norm requires s >= 0")
    w = (1.0 + f.grid.kmag2) ** s
    return float(np.sqrt(np.sum(w * np.abs(f.spectrum) ** 2)))


def holder_proxy(f: Field, lam: float) -> float:
    """Spectral surrogate for the C^lam norm: ||f||_inf + ||L^lam f||_inf.

    Not norm-equivalent to the Holder norm; used as a regularity monitor.
    At lam == 1 the exponent is shifted to 1 + HOLDER_C1_SHIFT.
    """
    if not (0.0 < lam < 2.0):
        raise ValueError("holder_proxy requires 0 < lam < 2")
    if lam == 1.0:
        lam = 1.0 + HOLDER_C1_SHIFT
    return sup_norm(f) + sup_norm(spectral_power(f, lam))
