"""Coefficient functions of the diffusion operator and their parametrization.

The diffusion tensor is ``H(s) = gamma * I + v(s) v(s)^T`` with ``gamma > 0``
and ``v`` a periodic vector field on the grid domain. Three representations
of ``v`` are supported: a constant vector, a truncated two-dimensional
Fourier series, and a fixed base field scaled by ``sqrt(beta)``. A
:class:`ParameterLayout` maps the free scalars of a representation to and
from a flat parameter vector ``theta`` in a fixed documented order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid

__all__ = [
    "ConstantVector",
    "FourierTerm",
    "FourierVectorField",
    "RotatedStreamField",
    "SampledVectorField",
    "ScaledVectorField",
    "rotated_gradient_field",
    "Anisotropy",
    "ParameterLayout",
    "ConstantFieldLayout",
    "FourierFieldLayout",
    "ScaledFieldLayout",
    "field_from_json",
    "field_to_json",
    "anisotropy_from_json",
    "anisotropy_to_json",
    "layout_from_json",
    "layout_to_json",
]

TWO_PI = 2.0 * math.pi


def _valid_frequency(k: int, l: int) -> bool:
    """Membership in the non-redundant half-plane of frequency pairs.

    The admissible set pairs each frequency with exactly one of ``(k, l)``
    and ``(-k, -l)``: all pairs with ``k >= 1`` plus ``(0, l)`` with
    ``l >= 1``. The constant term ``(0, 0)`` is handled separately.
    """
    return (k >= 1) or (k == 0 and l >= 1)


# ---------------------------------------------------------------------------
# vector field representations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantVector:
    """Spatially constant vector field ``v = (v1, v2)``."""

    v1: float
    v2: float

    is_constant = True

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        return np.full_like(x, self.v1), np.full_like(x, self.v2)


@dataclass(frozen=True)
class FourierTerm:
    """Coefficients of one frequency ``(k, l)`` of a vector Fourier series.

    ``a1, b1`` weight the cosine and sine of the first component and
    ``a2, b2`` those of the second.
    """

    k: int
    l: int
    a1: float = 0.0
    b1: float = 0.0
    a2: float = 0.0
    b2: float = 0.0


@dataclass(frozen=True)
class FourierVectorField:
    """Truncated real Fourier series for a periodic vector field.

    ``v(x, y) = const + sum over terms of (a cos + b sin)(2 pi (k x / width
    + l y / height))`` componentwise. Periodicity in both directions holds
    by construction. Frequencies must be distinct and lie in the
    non-redundant half-plane (``k >= 1``, or ``k == 0 and l >= 1``).
    """

    width: float
    height: float
    const: tuple[float, float] = (0.0, 0.0)
    terms: tuple[FourierTerm, ...] = ()

    def __post_init__(self):
        seen = set()
        for t in self.terms:
            if not _valid_frequency(t.k, t.l):
                raise ValueError(f"frequency ({t.k}, {t.l}) outside the admissible set")
            if (t.k, t.l) in seen:
                raise ValueError(f"duplicate frequency ({t.k}, {t.l})")
            seen.add((t.k, t.l))

    @property
    def is_constant(self) -> bool:
        return all(t.a1 == t.b1 == t.a2 == t.b2 == 0.0 for t in self.terms)

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        v1 = np.full_like(x, self.const[0])
        v2 = np.full_like(x, self.const[1])
        for t in self.terms:
            arg = TWO_PI * (t.k * x / self.width + t.l * y / self.height)
            c, s = np.cos(arg), np.sin(arg)
            v1 = v1 + t.a1 * c + t.b1 * s
            v2 = v2 + t.a2 * c + t.b2 * s
        return v1, v2


@dataclass(frozen=True)
class RotatedStreamField:
    """Divergence-free field from a sinusoidal stream function.

    The stream function is ``f = sum of a cos + b sin`` over the given
    ``(k, l, a, b)`` terms (same argument convention as the Fourier field)
    and the field is its gradient rotated 90 degrees counter-clockwise,
    ``v = (-df/dy, df/dx)``, evaluated in closed form.
    """

    width: float
    height: float
    terms: tuple[tuple[int, int, float, float], ...]

    is_constant = False

    def stream(self, x, y):
        x = np.asarray(x, dtype=float)
        f = np.zeros_like(x)
        for k, l, a, b in self.terms:
            arg = TWO_PI * (k * x / self.width + l * y / self.height)
            f = f + a * np.cos(arg) + b * np.sin(arg)
        return f

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        v1 = np.zeros_like(x)
        v2 = np.zeros_like(x)
        for k, l, a, b in self.terms:
            wx = TWO_PI * k / self.width
            wy = TWO_PI * l / self.height
            arg = wx * x + wy * y
            # d/darg of (a cos + b sin) = -a sin + b cos
            d = -a * np.sin(arg) + b * np.cos(arg)
            v1 = v1 - wy * d
            v2 = v2 + wx * d
        return v1, v2


class SampledVectorField:
    """Vector field stored on the half-step lattice of a grid.

    Values live on the ``2N x 2M`` lattice of :meth:`Grid.half_step_lattice`,
    which contains every cell centre and face centre, so assembly reads face
    values directly instead of interpolating. Evaluation is only defined at
    lattice points (coordinates are snapped with a relative tolerance of
    1e-9 and wrapped periodically).
    """

    is_constant = False

    def __init__(self, grid: Grid, vx, vy):
        vx = np.asarray(vx, dtype=float)
        vy = np.asarray(vy, dtype=float)
        expected = (2 * grid.cells_y, 2 * grid.cells_x)
        if vx.shape != expected or vy.shape != expected:
            raise ValueError(f"lattice arrays must have shape {expected}")
        self.grid = grid
        self.vx = vx
        self.vy = vy

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "SampledVectorField":
        """Sample ``fn(x, y) -> (vx, vy)`` on the half-step lattice."""
        X, Y = grid.half_step_lattice()
        vx, vy = fn(X, Y)
        return cls(grid, np.broadcast_to(vx, X.shape), np.broadcast_to(vy, X.shape))

    def _lattice_indices(self, x, y):
        ax = np.asarray(x, dtype=float) / (0.5 * self.grid.step_x)
        by = np.asarray(y, dtype=float) / (0.5 * self.grid.step_y)
        a = np.rint(ax)
        b = np.rint(by)
        if np.any(np.abs(ax - a) > 1e-9 * (1.0 + np.abs(ax))) or np.any(
            np.abs(by - b) > 1e-9 * (1.0 + np.abs(by))
        ):
            raise ValueError("point does not lie on the half-step lattice")
        return (
            a.astype(np.int64) % (2 * self.grid.cells_x),
            b.astype(np.int64) % (2 * self.grid.cells_y),
        )

    def evaluate(self, x, y):
        a, b = self._lattice_indices(x, y)
        return self.vx[b, a], self.vy[b, a]


@dataclass(frozen=True)
class ScaledVectorField:
    """A fixed base field scaled by ``sqrt(beta)``.

    The exposed parameter is the anisotropy strength ``beta >= 0``; in
    ``H = gamma I + beta v v^T`` the scaled field plays the role of
    ``sqrt(beta) v`` so the tensor needs no special casing.
    """

    base: object
    beta: float

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")

    @property
    def is_constant(self) -> bool:
        return getattr(self.base, "is_constant", False)

    def evaluate(self, x, y):
        v1, v2 = self.base.evaluate(x, y)
        s = math.sqrt(self.beta)
        return s * v1, s * v2


def rotated_gradient_field(f, grid: Grid, grad=None) -> SampledVectorField:
    """Gradient of a periodic scalar ``f`` rotated 90 degrees CCW.

    Returns ``v = (-df/dy, df/dx)`` sampled on the half-step lattice. If
    ``grad(x, y) -> (fx, fy)`` is supplied the derivatives are evaluated
    analytically; otherwise they are approximated by centred differences
    of ``f`` on the (periodic) lattice, accurate to second order in the
    half-step spacing.
    """
    X, Y = grid.half_step_lattice()
    if grad is not None:
        fx, fy = grad(X, Y)
    else:
        F = np.asarray(f(X, Y), dtype=float)
        dx = 0.5 * grid.step_x
        dy = 0.5 * grid.step_y
        fx = (np.roll(F, -1, axis=1) - np.roll(F, 1, axis=1)) / (2.0 * dx)
        fy = (np.roll(F, -1, axis=0) - np.roll(F, 1, axis=0)) / (2.0 * dy)
    return SampledVectorField(grid, -np.asarray(fy, dtype=float), np.asarray(fx, dtype=float))


# ---------------------------------------------------------------------------
# the diffusion tensor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Anisotropy:
    """Diffusion tensor ``H(s) = gamma I + v(s) v(s)^T``.

    ``gamma > 0`` is the isotropic baseline; the vector field contributes
    the direction and magnitude of the extra anisotropy. The tensor is
    symmetric positive definite everywhere by construction (eigenvalues
    ``gamma`` and ``gamma + |v|^2``) and invariant under ``v -> -v``.
    """

    gamma: float
    field: object = field(default_factory=lambda: ConstantVector(0.0, 0.0))

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be strictly positive")

    @property
    def is_constant(self) -> bool:
        return getattr(self.field, "is_constant", False)

    def tensor(self, x, y):
        """Components ``(h11, h12, h22)`` of ``H`` at the given points."""
        v1, v2 = self.field.evaluate(x, y)
        return self.gamma + v1 * v1, v1 * v2, self.gamma + v2 * v2

    def matrix(self, x: float, y: float) -> np.ndarray:
        """The 2x2 tensor at a single point."""
        h11, h12, h22 = self.tensor(x, y)
        return np.array([[float(h11), float(h12)], [float(h12), float(h22)]])


# ---------------------------------------------------------------------------
# parameter layouts (theta <-> Anisotropy)
# ---------------------------------------------------------------------------


class ParameterLayout:
    """Fixed ordering of the free scalars of an anisotropy representation.

    ``theta[0]`` is always ``gamma``; the remaining slots are defined by
    the concrete layout. ``pack(unpack(theta)) == theta`` exactly.
    """

    n_params: int

    @property
    def names(self) -> list[str]:
        raise NotImplementedError

    @property
    def always_constant(self) -> bool:
        """Whether every parameter vector yields a constant tensor field."""
        return False

    def unpack(self, theta) -> Anisotropy:
        raise NotImplementedError

    def pack(self, aniso: Anisotropy) -> np.ndarray:
        raise NotImplementedError

    def _check_length(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(
                f"parameter vector has shape {theta.shape}, expected ({self.n_params},)"
            )
        return theta

    def flip_field_sign(self, theta) -> np.ndarray:
        """theta with the vector-field part negated (same model)."""
        theta = self._check_length(theta).copy()
        theta[1:] *= self._field_sign_mask()
        return theta

    def _field_sign_mask(self) -> np.ndarray:
        return -np.ones(self.n_params - 1)


@dataclass(frozen=True)
class ConstantFieldLayout(ParameterLayout):
    """``theta = (gamma, v1, v2)`` for a constant vector field."""

    @property
    def n_params(self) -> int:
        return 3

    @property
    def always_constant(self) -> bool:
        return True

    @property
    def names(self) -> list[str]:
        return ["gamma", "v1", "v2"]

    def unpack(self, theta) -> Anisotropy:
        theta = self._check_length(theta)
        return Anisotropy(gamma=float(theta[0]), field=ConstantVector(theta[1], theta[2]))

    def pack(self, aniso: Anisotropy) -> np.ndarray:
        if not isinstance(aniso.field, ConstantVector):
            raise ValueError("constant layout requires a ConstantVector field")
        return np.array([aniso.gamma, aniso.field.v1, aniso.field.v2])


@dataclass(frozen=True)
class FourierFieldLayout(ParameterLayout):
    """Fourier-basis layout.

    ``theta = (gamma, A1_00, A2_00, then per frequency in lexicographic
    (k, l) order: A1, B1, A2, B2)``. ``frequencies`` lists the non-constant
    frequencies; the (0, 0) constant term is always present, giving
    ``3 + 4 * len(frequencies)`` parameters (19 for the four-frequency set
    used in the flexible-model experiments).
    """

    width: float
    height: float
    frequencies: tuple[tuple[int, int], ...]

    def __post_init__(self):
        freqs = tuple((int(k), int(l)) for k, l in self.frequencies)
        if len(set(freqs)) != len(freqs):
            raise ValueError("duplicate frequencies")
        for k, l in freqs:
            if not _valid_frequency(k, l):
                raise ValueError(f"frequency ({k}, {l}) outside the admissible set")
        object.__setattr__(self, "frequencies", tuple(sorted(freqs)))

    @property
    def n_params(self) -> int:
        return 3 + 4 * len(self.frequencies)

    @property
    def always_constant(self) -> bool:
        return not self.frequencies

    @property
    def names(self) -> list[str]:
        names = ["gamma", "A1_0_0", "A2_0_0"]
        for k, l in self.frequencies:
            names += [f"A1_{k}_{l}", f"B1_{k}_{l}", f"A2_{k}_{l}", f"B2_{k}_{l}"]
        return names

    def unpack(self, theta) -> Anisotropy:
        theta = self._check_length(theta)
        terms = []
        for m, (k, l) in enumerate(self.frequencies):
            a1, b1, a2, b2 = theta[3 + 4 * m : 7 + 4 * m]
            terms.append(FourierTerm(k, l, a1, b1, a2, b2))
        fld = FourierVectorField(
            self.width, self.height, const=(float(theta[1]), float(theta[2])), terms=tuple(terms)
        )
        return Anisotropy(gamma=float(theta[0]), field=fld)

    def pack(self, aniso: Anisotropy) -> np.ndarray:
        fld = aniso.field
        if not isinstance(fld, FourierVectorField):
            raise ValueError("fourier layout requires a FourierVectorField")
        by_freq = {(t.k, t.l): t for t in fld.terms}
        extra = set(by_freq) - set(self.frequencies)
        if extra:
            raise ValueError(f"field has frequencies {sorted(extra)} not in the layout")
        theta = [aniso.gamma, fld.const[0], fld.const[1]]
        for k, l in self.frequencies:
            t = by_freq.get((k, l), FourierTerm(k, l))
            theta += [t.a1, t.b1, t.a2, t.b2]
        return np.array(theta)


@dataclass(frozen=True)
class ScaledFieldLayout(ParameterLayout):
    """``theta = (gamma, beta)`` for a fixed base field scaled by beta."""

    base: object

    @property
    def n_params(self) -> int:
        return 2

    @property
    def always_constant(self) -> bool:
        return getattr(self.base, "is_constant", False)

    @property
    def names(self) -> list[str]:
        return ["gamma", "beta"]

    def unpack(self, theta) -> Anisotropy:
        theta = self._check_length(theta)
        if theta[1] < 0:
            raise ValueError("beta must be nonnegative")
        return Anisotropy(gamma=float(theta[0]), field=ScaledVectorField(self.base, float(theta[1])))

    def pack(self, aniso: Anisotropy) -> np.ndarray:
        fld = aniso.field
        if not isinstance(fld, ScaledVectorField):
            raise ValueError("scaled-field layout requires a ScaledVectorField")
        return np.array([aniso.gamma, fld.beta])

    def _field_sign_mask(self) -> np.ndarray:
        # beta multiplies v v^T, so the sign flip is a no-op
        return np.ones(1)


# ---------------------------------------------------------------------------
# JSON interchange (shared with the command-line interface)
# ---------------------------------------------------------------------------


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ValueError(f"{where}: missing required key '{key}'")
    return obj[key]


def _base_field_from_json(obj: dict, grid: Grid, where: str):
    if "stream" in obj:
        terms = []
        for m, t in enumerate(_require(obj, "stream", where)):
            terms.append(
                (
                    int(_require(t, "k", f"{where}.stream[{m}]")),
                    int(_require(t, "l", f"{where}.stream[{m}]")),
                    float(t.get("A", 0.0)),
                    float(t.get("B", 0.0)),
                )
            )
        return RotatedStreamField(grid.width, grid.height, tuple(terms))
    if "vx_path" in obj or "vy_path" in obj:
        vx = np.loadtxt(_require(obj, "vx_path", where), delimiter=",", ndmin=2)
        vy = np.loadtxt(_require(obj, "vy_path", where), delimiter=",", ndmin=2)
        return SampledVectorField(grid, vx, vy)
    raise ValueError(f"{where}: base field needs either 'stream' or 'vx_path'/'vy_path'")


def field_from_json(obj: dict, grid: Grid, where: str = "field"):
    """Build a vector field from its JSON description."""
    kind = _require(obj, "type", where)
    if kind == "constant":
        return ConstantVector(float(obj.get("v1", 0.0)), float(obj.get("v2", 0.0)))
    if kind == "fourier":
        const = (0.0, 0.0)
        terms = []
        for m, c in enumerate(obj.get("coefficients", [])):
            k = int(_require(c, "k", f"{where}.coefficients[{m}]"))
            l = int(_require(c, "l", f"{where}.coefficients[{m}]"))
            if (k, l) == (0, 0):
                if c.get("B1") or c.get("B2"):
                    raise ValueError(f"{where}: the (0, 0) term has no sine coefficients")
                const = (float(c.get("A1", 0.0)), float(c.get("A2", 0.0)))
            else:
                terms.append(
                    FourierTerm(
                        k,
                        l,
                        float(c.get("A1", 0.0)),
                        float(c.get("B1", 0.0)),
                        float(c.get("A2", 0.0)),
                        float(c.get("B2", 0.0)),
                    )
                )
        return FourierVectorField(grid.width, grid.height, const=const, terms=tuple(terms))
    if kind == "fixed":
        base = _base_field_from_json(_require(obj, "base", where), grid, f"{where}.base")
        return ScaledVectorField(base, float(_require(obj, "beta", where)))
    raise ValueError(f"{where}.type: unknown field type '{kind}'")


def field_to_json(fld) -> dict:
    if isinstance(fld, ConstantVector):
        return {"type": "constant", "v1": fld.v1, "v2": fld.v2}
    if isinstance(fld, FourierVectorField):
        coeffs = [{"k": 0, "l": 0, "A1": fld.const[0], "A2": fld.const[1]}]
        for t in fld.terms:
            coeffs.append(
                {"k": t.k, "l": t.l, "A1": t.a1, "B1": t.b1, "A2": t.a2, "B2": t.b2}
            )
        return {"type": "fourier", "coefficients": coeffs}
    if isinstance(fld, ScaledVectorField):
        base = fld.base
        if isinstance(base, RotatedStreamField):
            stream = [{"k": k, "l": l, "A": a, "B": b} for k, l, a, b in base.terms]
            return {"type": "fixed", "beta": fld.beta, "base": {"stream": stream}}
        raise ValueError("only stream-based fixed fields have a JSON form")
    raise ValueError(f"no JSON form for field of type {type(fld).__name__}")


def anisotropy_from_json(obj: dict, grid: Grid, where: str = "anisotropy") -> Anisotropy:
    gamma = float(_require(obj, "gamma", where))
    if gamma <= 0:
        raise ValueError(f"{where}.gamma: must be strictly positive")
    return Anisotropy(gamma=gamma, field=field_from_json(_require(obj, "field", where), grid, f"{where}.field"))


def anisotropy_to_json(aniso: Anisotropy) -> dict:
    return {"gamma": aniso.gamma, "field": field_to_json(aniso.field)}


def layout_from_json(obj: dict, grid: Grid, where: str = "layout") -> ParameterLayout:
    kind = _require(obj, "type", where)
    if kind == "constant":
        return ConstantFieldLayout()
    if kind == "fourier":
        freqs = [
            (int(k), int(l)) for k, l in _require(obj, "frequencies", where)
            if (int(k), int(l)) != (0, 0)
        ]
        return FourierFieldLayout(grid.width, grid.height, tuple(freqs))
    if kind == "fixed_field":
        base = _base_field_from_json(_require(obj, "base", where), grid, f"{where}.base")
        return ScaledFieldLayout(base)
    raise ValueError(f"{where}.type: unknown layout type '{kind}'")


def layout_to_json(layout: ParameterLayout) -> dict:
    if isinstance(layout, ConstantFieldLayout):
        return {"type": "constant"}
    if isinstance(layout, FourierFieldLayout):
        return {"type": "fourier", "frequencies": [list(f) for f in layout.frequencies]}
    if isinstance(layout, ScaledFieldLayout):
        base = layout.base
        if isinstance(base, RotatedStreamField):
            stream = [{"k": k, "l": l, "A": a, "B": b} for k, l, a, b in base.terms]
            return {"type": "fixed_field", "base": {"stream": stream}}
        raise ValueError("only stream-based fixed layouts have a JSON form")
    raise ValueError(f"no JSON form for layout of type {type(layout).__name__}")
