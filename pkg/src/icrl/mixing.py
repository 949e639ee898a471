"""Injective mixing maps with closed-form inverses.

Two families are provided.  :class:`LinearMixer` is a full-column-rank
``p x d`` matrix with a stored left inverse.  :class:`FlowMixer` is a stack of
orthogonal, signed-power and shift layers (each exactly invertible),
optionally followed by a linear embedding into ``R^p``.  A flow without
embedding is a bijection of ``R^d``; :class:`ReparamMap` is that square case.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import DimensionMismatch, DimensionTooSmall, NotInImage, ZeroVector

ORTHO_TOL = 1e-9
RANK_RTOL = 1e-8
IMAGE_RTOL = 1e-6


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def _as_rows(z, d: int) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z2 = z.reshape(1, -1) if single else z
    if z2.ndim != 2 or z2.shape[1] != d:
        raise DimensionMismatch(f"expected {d} columns, got shape {z.shape}")
    return z2, single


@dataclass(frozen=True, eq=False)
class OrthogonalLayer:
    q: np.ndarray

    def __post_init__(self):
        q = _frozen(self.q)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise DimensionMismatch(f"orthogonal layer needs a square matrix, got {q.shape}")
        err = np.max(np.abs(q.T @ q - np.eye(q.shape[0])))
        if err > ORTHO_TOL:
            raise ValueError(f"matrix is not orthogonal (max |Q^T Q - I| = {err:.3g})")
        object.__setattr__(self, "q", q)

    @property
    def d(self) -> int:
        return self.q.shape[0]

    def forward(self, z: np.ndarray) -> np.ndarray:
        return z @ self.q.T

    def inverse(self, u: np.ndarray) -> np.ndarray:
        return u @ self.q

    def inverted(self) -> OrthogonalLayer:
        return OrthogonalLayer(self.q.T)

    def to_dict(self) -> dict:
        return {"type": "orthogonal", "matrix": self.q.tolist()}


@dataclass(frozen=True, eq=False)
class SignedPowerLayer:
    """Coordinatewise ``t -> sign(t) |t|^gamma``; strictly monotone for every ``gamma > 0``.

    Layers with ``gamma < 1`` are not Lipschitz at the origin.
    """

    gamma: np.ndarray

    def __post_init__(self):
        g = _frozen(np.atleast_1d(self.gamma))
        if g.ndim != 1 or np.any(~np.isfinite(g)) or np.any(g <= 0):
            raise ValueError(f"signed-power exponents must be finite and > 0, got {g}")
        object.__setattr__(self, "gamma", g)

    @property
    def d(self) -> int:
        return self.gamma.shape[0]

    @staticmethod
    def _power(t: np.ndarray, g: np.ndarray) -> np.ndarray:
        out = np.sign(t) * np.abs(t) ** g
        ones = g == 1.0
        if ones.any():
            out[:, ones] = t[:, ones]
        return out

    def forward(self, z: np.ndarray) -> np.ndarray:
        return self._power(z, self.gamma)

    def inverse(self, u: np.ndarray) -> np.ndarray:
        out = self._power(u, 1.0 / self.gamma)
        cubes = self.gamma == 3.0
        if cubes.any():
            out[:, cubes] = np.cbrt(u[:, cubes])
        return out

    def inverted(self) -> SignedPowerLayer:
        return SignedPowerLayer(1.0 / self.gamma)

    def to_dict(self) -> dict:
        return {"type": "signed_power", "gamma": self.gamma.tolist()}


@dataclass(frozen=True, eq=False)
class ShiftLayer:
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "b", _frozen(np.atleast_1d(self.b)))

    @property
    def d(self) -> int:
        return self.b.shape[0]

    def forward(self, z: np.ndarray) -> np.ndarray:
        return z + self.b

    def inverse(self, u: np.ndarray) -> np.ndarray:
        return u - self.b

    def inverted(self) -> ShiftLayer:
        return ShiftLayer(-self.b)

    def to_dict(self) -> dict:
        return {"type": "shift", "b": self.b.tolist()}


Layer = Union[OrthogonalLayer, SignedPowerLayer, ShiftLayer]


@dataclass(frozen=True, eq=False)
class LinearMixer:
    """``x = G z`` for a full-column-rank ``p x d`` matrix ``G`` (``p >= d``)."""

    matrix: np.ndarray
    left_inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = _frozen(self.matrix)
        if g.ndim != 2:
            raise DimensionMismatch(f"mixing matrix must be 2-D, got shape {g.shape}")
        p, d = g.shape
        if p < d:
            raise DimensionMismatch(f"mixing needs p >= d, got p={p}, d={d}")
        s = np.linalg.svd(g, compute_uv=False)
        if s[-1] <= RANK_RTOL * s[0]:
            raise ValueError("mixing matrix does not have full column rank")
        pinv = _frozen(np.linalg.pinv(g))
        err = np.max(np.abs(pinv @ g - np.eye(d)))
        if err > 1e-9:
            raise ValueError(f"left inverse is inaccurate (max |G+G - I| = {err:.3g})")
        object.__setattr__(self, "matrix", g)
        object.__setattr__(self, "left_inverse", pinv)

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    def mix(self, z):
        z2, single = _as_rows(z, self.d)
        x = z2 @ self.matrix.T
        return x[0] if single else x

    def unmix(self, x):
        x2, single = _as_rows(x, self.p)
        z = self._project(x2)
        return z[0] if single else z

    def _project(self, x: np.ndarray) -> np.ndarray:
        z = x @ self.left_inverse.T
        if self.p > self.d:
            resid = np.linalg.norm(z @ self.matrix.T - x, axis=1)
            scale = np.linalg.norm(x, axis=1)
            bad = resid > IMAGE_RTOL * scale
            if bad.any():
                i = int(np.argmax(bad))
                raise NotInImage(
                    f"row {i} is off the image: residual {resid[i]:.3g} > {IMAGE_RTOL:g} * {scale[i]:.3g}"
                )
        return z

    def to_dict(self) -> dict:
        return {"type": "linear", "matrix": self.matrix.tolist()}


@dataclass(frozen=True, eq=False)
class FlowMixer:
    """Layers applied in order, then the optional embedding."""

    d: int
    layers: tuple[Layer, ...] = ()
    embedding: LinearMixer | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for layer in self.layers:
            if layer.d != self.d:
                raise DimensionMismatch(f"layer of dimension {layer.d} in a d={self.d} flow")
        if self.embedding is not None and self.embedding.d != self.d:
            raise DimensionMismatch(f"embedding expects d={self.embedding.d}, flow has d={self.d}")

    @property
    def p(self) -> int:
        return self.d if self.embedding is None else self.embedding.p

    def mix(self, z):
        z2, single = _as_rows(z, self.d)
        u = z2.copy()
        for layer in self.layers:
            u = layer.forward(u)
        if self.embedding is not None:
            u = u @ self.embedding.matrix.T
        return u[0] if single else u

    def unmix(self, x):
        x2, single = _as_rows(x, self.p)
        u = x2.copy() if self.embedding is None else self.embedding._project(x2)
        for layer in reversed(self.layers):
            u = layer.inverse(u)
        return u[0] if single else u

    def to_dict(self) -> dict:
        return {
            "type": "flow",
            "d": self.d,
            "layers": [layer.to_dict() for layer in self.layers],
            "embedding": None if self.embedding is None else self.embedding.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class ReparamMap(FlowMixer):
    """Square flow: a bijection of ``R^d`` with exact inverse."""

    def __post_init__(self):
        if self.embedding is not None:
            raise DimensionMismatch("a reparametrization cannot carry an embedding")
        super().__post_init__()

    def inverse(self) -> ReparamMap:
        return ReparamMap(self.d, tuple(layer.inverted() for layer in reversed(self.layers)))

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["type"] = "reparam"
        del out["embedding"]
        return out


Mixer = Union[LinearMixer, FlowMixer]


def mix(m: Mixer, z):
    return m.mix(z)


def unmix(m: Mixer, x):
    return m.unmix(x)


def identity(d: int) -> ReparamMap:
    return ReparamMap(d, ())


def compose(g: Mixer, psi: FlowMixer) -> Mixer:
    """The mixer ``g o psi``; its ``unmix`` is ``psi^{-1} o g^{-1}``."""
    if psi.embedding is not None:
        raise DimensionMismatch("psi must be square (no embedding)")
    if psi.d != g.d:
        raise DimensionMismatch(f"psi has d={psi.d}, g has d={g.d}")
    if isinstance(g, LinearMixer):
        return FlowMixer(g.d, psi.layers, g)
    layers = psi.layers + g.layers
    if g.embedding is None:
        return ReparamMap(g.d, layers)
    return FlowMixer(g.d, layers, g.embedding)


def householder_to_e1(theta) -> np.ndarray:
    """Orthogonal ``A`` with ``A @ theta = (||theta||, 0, ..., 0)``.

    One Householder reflection built from ``v + sign(v_1) e_1`` (no
    cancellation), followed by flipping the sign of the first row.
    """
    theta = np.asarray(theta, dtype=float)
    norm = np.linalg.norm(theta)
    if norm == 0:
        raise ZeroVector("theta must be nonzero")
    d = theta.shape[0]
    v = theta / norm
    e1 = np.zeros(d)
    e1[0] = 1.0
    if np.max(np.abs(v - e1)) <= 1e-12:
        return np.eye(d)
    s = 1.0 if v[0] >= 0 else -1.0
    u = v + s * e1
    h = np.eye(d) - 2.0 * np.outer(u, u) / (u @ u)
    # h @ v = -s e1
    h[0, :] *= -s
    return h


def signed_power_tail(d: int, exponent: float) -> ReparamMap:
    """Identity on the first coordinate, ``sign(t)|t|^exponent`` on the rest."""
    if d < 2:
        raise DimensionTooSmall(f"need d >= 2, got {d}")
    gamma = np.full(d, float(exponent))
    gamma[0] = 1.0
    return ReparamMap(d, (SignedPowerLayer(gamma),))


def cube_tail(d: int) -> ReparamMap:
    return signed_power_tail(d, 3.0)


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def random_flow(
    d: int,
    rng: np.random.Generator,
    n_blocks: int = 2,
    p: int | None = None,
    gamma_range: tuple[float, float] = (2.0 / 3.0, 1.5),
    shift_scale: float = 1.0,
) -> FlowMixer:
    """Alternating orthogonal / signed-power / shift blocks, embedded into ``R^p`` if ``p > d``.

    The default exponent range keeps ``unmix(mix(z))`` within 1e-9 of ``z`` on
    ``[-10, 10]^d``: larger exponents followed by a rotation lose digits near
    the origin that no inverse can recover.  The embedding has orthonormal
    columns for the same reason, and the range is closed under inversion.
    """
    layers: list[Layer] = []
    for _ in range(n_blocks):
        layers.append(OrthogonalLayer(random_orthogonal(d, rng)))
        layers.append(SignedPowerLayer(rng.uniform(*gamma_range, size=d)))
        layers.append(ShiftLayer(rng.uniform(-shift_scale, shift_scale, size=d)))
    if p is None or p == d:
        return ReparamMap(d, tuple(layers))
    q, r = np.linalg.qr(rng.standard_normal((p, d)))
    return FlowMixer(d, tuple(layers), LinearMixer(q * np.sign(np.diag(r))))


def layer_from_dict(obj: dict) -> Layer:
    kind = obj["type"]
    if kind == "orthogonal":
        return OrthogonalLayer(obj["matrix"])
    if kind == "signed_power":
        return SignedPowerLayer(obj["gamma"])
    if kind == "shift":
        return ShiftLayer(obj["b"])
    raise ValueError(f"unknown layer type {kind!r}")


def mixer_to_dict(m: Mixer) -> dict:
    return m.to_dict()


def mixer_from_dict(obj: dict) -> Mixer:
    kind = obj["type"]
    if kind == "linear":
        return LinearMixer(obj["matrix"])
    layers = tuple(layer_from_dict(x) for x in obj.get("layers", []))
    if kind == "reparam":
        return ReparamMap(int(obj["d"]), layers)
    if kind == "flow":
        emb = obj.get("embedding")
        embedding = None if emb is None else LinearMixer(emb["matrix"])
        if embedding is None:
            return ReparamMap(int(obj["d"]), layers)
        return FlowMixer(int(obj["d"]), layers, embedding)
    raise ValueError(f"unknown mixer type {kind!r}")
