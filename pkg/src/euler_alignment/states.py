"""State representations and the exact change of variables between them.

The simulator integrates either the primitive unknowns (rho, u) or the
symmetrized unknowns (sigma, u), where sigma is the nonlinear density
variable that makes the acoustic coupling symmetric with coefficient
sqrt(gamma) + (gamma-1)*sigma/2 at the uniform state.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .spectral import Field, FractionalExponent, Grid, VectorField, sobolev_norm

__all__ = [
    "ModelParams",
    "PrimitiveState",
    "SigmaState",
    "PositivityError",
    "sigma_of_rho",
    "rho_of_sigma",
    "rho_dev_of_sigma",
    "sigma_prime_of_rho",
    "make_perturbation_ic",
]


class PositivityError(ValueError):
    """Density positivity lost; carries the offending grid location."""

    def __init__(self, message, location=None, value=None):
        super().__init__(message)
        self.location = location
        self.value = value


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters: pressure law rho^gamma, damping, kernel order."""

    gamma: float = 1.0
    beta: float = 0.0
    alpha: FractionalExponent = field(default_factory=lambda: FractionalExponent(0.5))
    s: float | None = None

    def __post_init__(self):
        if self.gamma < 1.0:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not isinstance(self.alpha, FractionalExponent):
            object.__setattr__(self, "alpha", FractionalExponent(float(self.alpha)))

    def regularity_index(self, dim: int) -> float:
        """Sobolev index used by the diagnostics; warns when below threshold."""
        a = self.alpha.alpha
        s_min = dim / 2.0 + max(1.0, 2.0 * a)
        if self.s is None:
            return s_min + 0.51
        if self.s <= s_min:
            warnings.warn(
                f"s={self.s} is at or below the well-posedness threshold "
                f"{s_min}; Sobolev diagnostics may be unreliable",
                stacklevel=2,
            )
        return float(self.s)


@dataclass(frozen=True)
class PrimitiveState:
    """Density/velocity unknowns; rho is dimensionless with mean one."""

    rho: Field
    u: VectorField
    t: float = 0.0

    def __post_init__(self):
        if self.rho.grid != self.u.grid:
            raise ValueError("rho and u must share one grid")
        if self.rho.values.min() <= 0.0:
            loc = tuple(np.argwhere(self.rho.values <= 0.0)[0])
            raise PositivityError(
                f"nonpositive density {self.rho.values[loc]:.3e} at grid index {loc}",
                location=loc,
                value=float(self.rho.values[loc]),
            )

    @property
    def grid(self) -> Grid:
        return self.rho.grid


@dataclass(frozen=True)
class SigmaState:
    """Symmetrized unknowns (sigma, u)."""

    sigma: Field
    u: VectorField
    t: float = 0.0

    def __post_init__(self):
        if self.sigma.grid != self.u.grid:
            raise ValueError("sigma and u must share one grid")

    @property
    def grid(self) -> Grid:
        return self.sigma.grid

    def to_primitive(self, gamma: float) -> PrimitiveState:
        return PrimitiveState(rho_of_sigma(self.sigma, gamma), self.u, self.t)


def _check_positive(values: np.ndarray, what: str):
    if values.min() <= 0.0:
        loc = tuple(np.argwhere(values <= 0.0)[0])
        raise PositivityError(
            f"nonpositive {what} {values[loc]:.3e} at grid index {loc}",
            location=loc,
            value=float(values[loc]),
        )


def sigma_of_rho(rho: Field, gamma: float) -> Field:
    """Symmetrizing density variable; vanishes at rho == 1.

    gamma == 1: log(rho); gamma > 1: (2*sqrt(g)/(g-1)) * (rho^((g-1)/2) - 1).
    """
    _check_positive(rho.values, "density")
    if gamma == 1.0:
        return Field(rho.grid, np.log(rho.values))
    g = float(gamma)
    return Field(
        rho.grid,
        (2.0 * np.sqrt(g) / (g - 1.0)) * (rho.values ** ((g - 1.0) / 2.0) - 1.0),
    )


def rho_of_sigma(sigma: Field, gamma: float) -> Field:
    """Exact inverse of sigma_of_rho."""
    return Field(sigma.grid, 1.0 + _rho_dev_values(sigma.values, gamma))


def rho_dev_of_sigma(sigma: Field, gamma: float) -> Field:
    """rho(sigma) - 1 computed without cancellation for small sigma."""
    return Field(sigma.grid, _rho_dev_values(sigma.values, gamma))


def _rho_dev_values(sig: np.ndarray, gamma: float) -> np.ndarray:
    # expm1/log1p keep rho-1 accurate down to |sigma| ~ 1e-300
    if gamma == 1.0:
        return np.expm1(sig)
    g = float(gamma)
    base = (g - 1.0) / (2.0 * np.sqrt(g)) * sig
    if base.min() <= -1.0:
        loc = tuple(np.argwhere(base <= -1.0)[0])
        raise PositivityError(
            f"vacuum reached in sigma variables at grid index {loc}",
            location=loc,
            value=float(sig[loc]),
        )
    return np.expm1((2.0 / (g - 1.0)) * np.log1p(base))


def sigma_prime_of_rho(rho: Field, gamma: float) -> Field:
    """d sigma / d rho = sqrt(gamma) * rho^((gamma-3)/2)."""
    _check_positive(rho.values, "density")
    g = float(gamma)
    return Field(rho.grid, np.sqrt(g) * rho.values ** ((g - 3.0) / 2.0))


def _random_band_limited(grid: Grid, rng: np.random.Generator, mode_cap: int, s: float):
    """Zero-mean random field with modes |m|_inf <= mode_cap and H^s-type decay."""
    spec = np.zeros(grid.shape, dtype=complex)
    m = grid.modes()
    sel = [np.abs(m) <= mode_cap for _ in range(grid.dim)]
    mask = np.ones(grid.shape, dtype=bool)
    for a in range(grid.dim):
        shape = [1] * grid.dim
        shape[a] = grid.n
        mask &= sel[a].reshape(shape)
    mask.flat[0] = False  # zero mean
    idx = np.argwhere(mask)
    amp = rng.standard_normal(len(idx)) + 1j * rng.standard_normal(len(idx))
    w = (1.0 + grid.kmag2[mask]) ** (-s / 2.0)
    spec[mask] = amp * w
    # the real part symmetrizes the coefficients, keeping the H^s decay
    vals = np.fft.ifftn(spec).real * grid.size
    return Field(grid, vals)


def make_perturbation_ic(
    grid: Grid,
    delta: float,
    seed: int,
    mode_cap: int | None = None,
    params: ModelParams | None = None,
) -> PrimitiveState:
    """Random small perturbation of the uniform resting state.

    The density has mean exactly one, the momentum integral is zero, and the
    combined H^s norm of the corresponding (sigma, u) equals ``delta`` (found
    by scalar root-finding on the overall amplitude, so the value is exact to
    the bracketing tolerance).  Deterministic in ``seed``.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    params = params or ModelParams()
    s = params.regularity_index(grid.dim)
    gamma = params.gamma
    if mode_cap is None:
        mode_cap = max(1, grid.n // 8)
    if mode_cap < 1 or mode_cap > grid.n // 2 - 1:
        raise ValueError(f"mode_cap must be in [1, n/2-1], got {mode_cap}")

    if delta == 0.0:
        return PrimitiveState(
            Field.constant(grid, 1.0), VectorField.zero(grid), 0.0
        )

    rng = np.random.default_rng(seed)
    base_sigma = _random_band_limited(grid, rng, mode_cap, s)
    base_u = [_random_band_limited(grid, rng, mode_cap, s) for _ in range(grid.dim)]

    def build(scale: float):
        rho_vals = 1.0 + _rho_dev_values(scale * base_sigma.values, gamma)
        if rho_vals.min() <= 0.0:
            raise PositivityError(
                "perturbation amplitude too large: density loses positivity; "
                "use a smaller delta"
            )
        rho_vals = rho_vals / rho_vals.mean()  # mean exactly one
        rho = Field(grid, rho_vals)
        u_comps = [Field(grid, scale * b.values) for b in base_u]
        # remove the mass-weighted mean so the momentum integral vanishes
        mass = rho_vals.mean()
        for a in range(grid.dim):
            shift = (rho_vals * u_comps[a].values).mean() / mass
            u_comps[a] = Field(grid, u_comps[a].values - shift)
        u = VectorField(u_comps)
        sig_f = sigma_of_rho(rho, gamma)
        norm2 = sobolev_norm(sig_f, s) ** 2 + sum(
            sobolev_norm(c, s) ** 2 for c in u_comps
        )
        return PrimitiveState(rho, u, 0.0), np.sqrt(norm2)

    # the norm is monotone in the scale near zero; bracket and bisect
    base_norm = build(1e-8)[1] / 1e-8
    scale = delta / base_norm
    lo, hi = 0.0, scale
    _, nhi = build(hi)
    tries = 0
    while nhi < delta:
        lo, hi = hi, 2.0 * hi
        _, nhi = build(hi)
        tries += 1
        if tries > 60:
            raise PositivityError("could not reach requested delta; use a smaller delta")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        state, nm = build(mid)
        if abs(nm - delta) <= 1e-12 * delta:
            return state
        if nm < delta:
            lo = mid
        else:
            hi = mid
    return build(0.5 * (lo + hi))[0]
