"""States and operators on a truncated multimode Fock space.

Every state lives on a :class:`ModeRegister`, an ordered list of labelled
modes with per-mode photon-number cutoffs.  Amplitudes are stored flat in
row-major order of the photon-number tuple, so a three-mode state with
cutoffs ``(2, 2, 14)`` has ``3 * 3 * 15`` amplitudes and ``|n1, n2, n3>`` sits
at ``np.ravel_multi_index((n1, n2, n3), (3, 3, 15))``.

Quadrature convention used across the package::

    x_theta = (a exp(-i theta) + a^dag exp(i theta)) / sqrt(2)

so the vacuum has quadrature variance 1/2.
"""

from __future__ import annotations

import json
import math
import string
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.special import gammaln

TRUNCATION_TOL = 1e-6


class FockError(Exception):
    """Base class for errors raised by the Fock-space layer."""


class CutoffTooSmall(FockError, ValueError):
    """The requested cutoff discards more norm than ``TRUNCATION_TOL``."""


class DegenerateCat(FockError, ValueError):
    """Odd cat state requested at zero amplitude."""


class UnknownMode(FockError, KeyError):
    pass


class DimensionMismatch(FockError, ValueError):
    pass


@dataclass(frozen=True)
class ModeRegister:
    """Ordered, labelled modes with inclusive photon-number cutoffs."""

    entries: tuple[tuple[str, int], ...]

    def __post_init__(self):
        entries = tuple((str(label), int(cutoff)) for label, cutoff in self.entries)
        object.__setattr__(self, "entries", entries)
        labels = [label for label, _ in entries]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate mode labels in {labels}")
        for label, cutoff in entries:
            if cutoff < 1:
                raise ValueError(f"mode {label!r} has cutoff {cutoff} < 1")

    @classmethod
    def of(cls, *entries: tuple[str, int]) -> "ModeRegister":
        return cls(tuple(entries))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.entries)

    @property
    def cutoffs(self) -> tuple[int, ...]:
        return tuple(cutoff for _, cutoff in self.entries)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(cutoff + 1 for _, cutoff in self.entries)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownMode(label) from None

    def cutoff(self, label: str) -> int:
        return self.entries[self.index(label)][1]

    def __add__(self, other: "ModeRegister") -> "ModeRegister":
        return ModeRegister(self.entries + other.entries)

    def subset(self, labels: Sequence[str]) -> "ModeRegister":
        return ModeRegister(tuple((label, self.cutoff(label)) for label in labels))

    def without(self, labels: Iterable[str]) -> "ModeRegister":
        drop = set(labels)
        for label in drop:
            self.index(label)
        return ModeRegister(tuple(e for e in self.entries if e[0] not in drop))

    def flatten(self, occupation: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(occupation), self.dims))

    def unflatten(self, index: int) -> tuple[int, ...]:
        return tuple(int(n) for n in np.unravel_index(index, self.dims))


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.complex128)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class FockVector:
    """Pure state (not necessarily normalized) on a register."""

    register: ModeRegister
    amps: np.ndarray
    truncation_loss: float = 0.0

    def __post_init__(self):
        amps = _frozen(np.ravel(self.amps))
        if amps.shape != (self.register.size,):
            raise DimensionMismatch(
                f"{amps.shape[0]} amplitudes for register of size {self.register.size}"
            )
        object.__setattr__(self, "amps", amps)

    @property
    def modes(self) -> tuple[str, ...]:
        return self.register.labels

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalize(self) -> "FockVector":
        norm = self.norm
        if norm == 0.0:
            raise ZeroDivisionError("cannot normalize the zero vector")
        return FockVector(self.register, self.amps / norm, self.truncation_loss)

    def tensor(self) -> np.ndarray:
        return self.amps.reshape(self.register.dims)

    def dm(self) -> "DensityOperator":
        return DensityOperator(self.register, np.outer(self.amps, self.amps.conj()))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Density operator on a register.

    Unnormalized operators are allowed and carry their true trace, which the
    projection routines use as the event probability.
    """

    register: ModeRegister
    matrix: np.ndarray

    def __post_init__(self):
        matrix = _frozen(self.matrix)
        size = self.register.size
        if matrix.shape != (size, size):
            raise DimensionMismatch(f"matrix {matrix.shape} for register of size {size}")
        object.__setattr__(self, "matrix", matrix)

    @property
    def modes(self) -> tuple[str, ...]:
        return self.register.labels

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def normalize(self) -> "DensityOperator":
        tr = self.trace
        if tr <= 0.0:
            raise ZeroDivisionError("cannot normalize an operator with non-positive trace")
        return DensityOperator(self.register, self.matrix / tr)

    def tensor(self) -> np.ndarray:
        dims = self.register.dims
        return self.matrix.reshape(dims + dims)

    def is_hermitian(self, atol: float = 1e-10) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=atol, rtol=0))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))

    def dm(self) -> "DensityOperator":
        return self


State = Union[FockVector, DensityOperator]


def as_density(state: State) -> DensityOperator:
    return state.dm()


def single(label: str, cutoff: int) -> ModeRegister:
    return ModeRegister(((label, cutoff),))


# -- constructors -------------------------------------------------------------


def vacuum(register: ModeRegister) -> FockVector:
    amps = np.zeros(register.size, dtype=complex)
    amps[0] = 1.0
    return FockVector(register, amps)


def fock_state(occupation: Sequence[int], register: ModeRegister) -> FockVector:
    amps = np.zeros(register.size, dtype=complex)
    amps[register.flatten(occupation)] = 1.0
    return FockVector(register, amps)


def _finish(amps: np.ndarray, exact_norm_sq: float, cutoff: int, label: str, what: str) -> FockVector:
    kept = float(np.sum(np.abs(amps) ** 2))
    lost = max(0.0, 1.0 - kept / exact_norm_sq)
    if lost > TRUNCATION_TOL:
        raise CutoffTooSmall(
            f"{what}: cutoff {cutoff} discards norm {lost:.3e} > {TRUNCATION_TOL:g}"
        )
    return FockVector(single(label, cutoff), amps / math.sqrt(kept), truncation_loss=lost)


def coherent(gamma: complex, cutoff: int, label: str = "C") -> FockVector:
    """Coherent state ``|gamma>`` truncated at ``cutoff`` and renormalized.

    Raises :class:`CutoffTooSmall` if more than ``TRUNCATION_TOL`` of the norm
    falls above the cutoff.
    """
    gamma = complex(gamma)
    n = np.arange(cutoff + 1)
    if gamma == 0:
        amps = (n == 0).astype(complex)
    else:
        log_mag = -0.5 * abs(gamma) ** 2 + n * math.log(abs(gamma)) - 0.5 * gammaln(n + 1)
        amps = np.exp(log_mag + 1j * n * np.angle(gamma))
    return _finish(amps, 1.0, cutoff, label, f"coherent({gamma})")


def squeezed_vacuum(r: float, cutoff: int, label: str = "C", angle: float = 0.0) -> FockVector:
    """Squeezed vacuum ``S(r e^{i angle})|0>``.

    With ``angle = 0`` the x quadrature (theta = 0) is squeezed to variance
    ``exp(-2r)/2``; ``angle = pi`` squeezes p instead, which stretches x and
    lines the state up with real-amplitude cat states.
    """
    if r < 0:
        raise ValueError("squeezing parameter must be non-negative")
    if cutoff < 2:
        raise ValueError("squeezed vacuum needs cutoff >= 2")
    amps = np.zeros(cutoff + 1, dtype=complex)
    k = np.arange(cutoff // 2 + 1)
    if r == 0:
        amps[0] = 1.0
    else:
        t = math.tanh(r)
        log_mag = (
            -0.5 * math.log(math.cosh(r))
            + k * math.log(t)
            + 0.5 * gammaln(2 * k + 1)
            - k * math.log(2.0)
            - gammaln(k + 1)
        )
        amps[2 * k] = np.exp(log_mag) * np.exp(1j * k * (angle + math.pi))
    return _finish(amps, 1.0, cutoff, label, f"squeezed_vacuum({r})")


def cat_state(gamma: complex, parity: str, cutoff: int, label: str = "C") -> FockVector:
    """Cat state ``N(|gamma> + |-gamma>)`` (parity ``'+'``) or with a minus sign.

    ``gamma`` may be complex; the usual case is real and positive.
    """
    if parity not in ("+", "-"):
        raise ValueError(f"parity must be '+' or '-', got {parity!r}")
    gamma = complex(gamma)
    n = np.arange(cutoff + 1)
    keep = (n % 2 == 0) if parity == "+" else (n % 2 == 1)
    if gamma == 0:
        if parity == "-":
            raise DegenerateCat("odd cat state is undefined at gamma = 0")
        return vacuum(single(label, cutoff))
    g2 = abs(gamma) ** 2
    # closed-form norm^2 of the unnormalized sum_{n in parity} gamma^n/sqrt(n!)
    exact = math.cosh(g2) if parity == "+" else math.sinh(g2)
    log_mag = n * math.log(abs(gamma)) - 0.5 * gammaln(n + 1)
    amps = np.where(keep, np.exp(log_mag + 1j * n * np.angle(gamma)), 0.0)
    # factor exp(-g2) out of both sides to keep large amplitudes finite
    amps = amps * math.exp(-0.5 * g2)
    return _finish(amps, exact * math.exp(-g2), cutoff, label, f"cat_state({gamma}, {parity})")


def cat_normalization(gamma: float, parity: str) -> float:
    """``N_pm = 1/sqrt(2 pm 2 exp(-2 gamma^2))``."""
    sign = 1.0 if parity == "+" else -1.0
    return 1.0 / math.sqrt(2.0 + sign * 2.0 * math.exp(-2.0 * abs(gamma) ** 2))


# -- single-mode operators ----------------------------------------------------


def lowering(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), 1).astype(complex)


def number_op(cutoff: int) -> np.ndarray:
    return np.diag(np.arange(cutoff + 1, dtype=float)).astype(complex)


# -- multilinear algebra ------------------------------------------------------


def _front(state: State, modes: Sequence[str]):
    """Permute ``modes`` to the front and fuse them into one axis.

    Returns ``(array, d_sub, rest_register, sub_dims, perm)``; the array is
    ``(d_sub, R)`` for vectors and ``(d_sub, R, d_sub, R)`` for operators.
    """
    reg = state.register
    axes = [reg.index(m) for m in modes]
    others = [i for i in range(len(reg)) if i not in axes]
    perm = axes + others
    sub_dims = tuple(reg.dims[a] for a in axes)
    d_sub = int(np.prod(sub_dims, dtype=np.int64))
    rest = reg.without(modes)
    if isinstance(state, FockVector):
        t = np.transpose(state.tensor(), perm).reshape(d_sub, rest.size)
    else:
        n = len(reg)
        t = np.transpose(state.tensor(), perm + [n + p for p in perm])
        t = t.reshape(d_sub, rest.size, d_sub, rest.size)
    return t, d_sub, rest, perm


def _back(t: np.ndarray, state: State, perm: list[int]) -> State:
    """Inverse of :func:`_front` for a result on the original register."""
    reg = state.register
    inv = list(np.argsort(perm))
    shape = tuple(reg.dims[p] for p in perm)
    if isinstance(state, FockVector):
        return FockVector(reg, np.transpose(t.reshape(shape), inv).ravel())
    n = len(reg)
    full = np.transpose(t.reshape(shape + shape), inv + [n + i for i in inv])
    return DensityOperator(reg, full.reshape(reg.size, reg.size))


def apply_matrix(state: State, op: np.ndarray, modes: Sequence[str]) -> State:
    """Apply a square operator acting on the joint space of ``modes``.

    ``op`` is indexed in row-major order of ``modes`` as listed.  Density
    operators transform as ``op rho op^dag``.  Mode order of the result
    matches the input register.
    """
    op = np.asarray(op, dtype=complex)
    t, d_sub, _, perm = _front(state, modes)
    if op.shape != (d_sub, d_sub):
        raise DimensionMismatch(f"operator {op.shape} on modes {list(modes)} of dim {d_sub}")
    if isinstance(state, FockVector):
        return _back(op @ t, state, perm)
    out = np.einsum("ik,krls,jl->irjs", op, t, op.conj(), optimize=True)
    return _back(out, state, perm)


def project(state: State, bra: np.ndarray, modes: Sequence[str]) -> State:
    """Contract ``modes`` against a bra given by its coefficients.

    ``bra`` holds the coefficients ``c`` of ``sum_k c_k <k|`` over the joint
    space of ``modes`` (row-major), i.e. the bra is used as given, without
    conjugation.  The contracted modes are removed; the result is left
    unnormalized so its squared norm (trace) is the event probability.
    """
    bra = np.asarray(bra, dtype=complex).ravel()
    t, d_sub, rest, _ = _front(state, modes)
    if bra.shape != (d_sub,):
        raise DimensionMismatch(f"bra of length {bra.size} on modes {list(modes)} of dim {d_sub}")
    if isinstance(state, FockVector):
        return FockVector(rest, bra @ t)
    return DensityOperator(rest, np.einsum("k,krls,l->rs", bra, t, bra.conj(), optimize=True))


def annihilate(state: State, mode: str) -> State:
    """Apply the lowering operator on ``mode``; the result is unnormalized."""
    a = lowering(state.register.cutoff(mode))
    return apply_matrix(state, a, [mode])


def mean_photon_number(state: State, mode: str) -> float:
    rho = partial_trace(state, [mode])
    return float(np.real(np.trace(number_op(rho.register.cutoff(mode)) @ rho.matrix)))


def tensor(a: State, b: State) -> State:
    """Tensor product; labels must be disjoint."""
    register = a.register + b.register
    if isinstance(a, FockVector) and isinstance(b, FockVector):
        return FockVector(
            register, np.kron(a.amps, b.amps), truncation_loss=a.truncation_loss + b.truncation_loss
        )
    return DensityOperator(register, np.kron(a.dm().matrix, b.dm().matrix))


def partial_trace(state: State, keep: Sequence[str]) -> DensityOperator:
    """Trace out every mode not in ``keep``; result modes follow ``keep`` order."""
    reg = state.register
    keep = list(keep)
    axes = [reg.index(m) for m in keep]
    if isinstance(state, FockVector):
        t = state.tensor()
        drop = [i for i in range(len(reg)) if i not in axes]
        t = np.moveaxis(t, axes + drop, range(len(reg)))
        d_keep = int(np.prod([reg.dims[a] for a in axes]))
        m = t.reshape(d_keep, -1)
        return DensityOperator(reg.subset(keep), m @ m.conj().T)
    n = len(reg)
    letters = string.ascii_letters
    ket = list(letters[:n])
    bra = list(letters[n : 2 * n])
    for i in range(n):
        if i not in axes:
            bra[i] = ket[i]
    out = "".join(ket[a] for a in axes) + "".join(bra[a] for a in axes)
    t = np.einsum("".join(ket) + "".join(bra) + "->" + out, state.tensor())
    sub = reg.subset(keep)
    return DensityOperator(sub, t.reshape(sub.size, sub.size))


def reorder(state: State, order: Sequence[str]) -> State:
    reg = state.register
    if sorted(order) != sorted(reg.labels):
        raise DimensionMismatch(f"{list(order)} is not a permutation of {reg.labels}")
    perm = [reg.index(m) for m in order]
    sub = reg.subset(order)
    if isinstance(state, FockVector):
        return FockVector(sub, np.transpose(state.tensor(), perm).ravel(), state.truncation_loss)
    n = len(reg)
    t = np.transpose(state.tensor(), perm + [n + p for p in perm])
    return DensityOperator(sub, t.reshape(sub.size, sub.size))


def relabel(state: State, mapping: dict[str, str]) -> State:
    reg = ModeRegister(tuple((mapping.get(l, l), c) for l, c in state.register.entries))
    if isinstance(state, FockVector):
        return FockVector(reg, state.amps, state.truncation_loss)
    return DensityOperator(reg, state.matrix)


def truncate_mode(state: FockVector, mode: str, cutoff: int) -> tuple[FockVector, float]:
    """Drop photon numbers above ``cutoff`` on one mode.

    Returns the (unrenormalized) truncated vector and the discarded squared
    norm as a fraction of the input norm.
    """
    reg = state.register
    axis = reg.index(mode)
    t = np.take(state.tensor(), np.arange(cutoff + 1), axis=axis)
    entries = list(reg.entries)
    entries[axis] = (mode, cutoff)
    out = FockVector(ModeRegister(tuple(entries)), t.ravel(), state.truncation_loss)
    lost = 1.0 - (out.norm / state.norm) ** 2
    return out, max(0.0, lost)


def overlap(a: State, b: State) -> complex:
    """``<a|b>`` for vectors, ``<a|rho|a>`` / ``tr(rho_a rho_b)`` otherwise."""
    if a.register != b.register:
        raise DimensionMismatch(f"registers differ: {a.register} vs {b.register}")
    if isinstance(a, FockVector) and isinstance(b, FockVector):
        return complex(np.vdot(a.amps, b.amps))
    if isinstance(a, FockVector):
        return complex(a.amps.conj() @ b.matrix @ a.amps)
    if isinstance(b, FockVector):
        return complex(b.amps.conj() @ a.matrix @ b.amps)
    return complex(np.trace(a.matrix @ b.matrix))


# -- serialization ------------------------------------------------------------


def _pairs(values: np.ndarray) -> list:
    return np.stack([values.real, values.imag], axis=-1).tolist()


def to_dict(state: State) -> dict:
    reg = state.register
    out = {"modes": list(reg.labels), "cutoffs": list(reg.cutoffs)}
    if isinstance(state, FockVector):
        out["amps"] = _pairs(state.amps)
    else:
        out["matrix"] = _pairs(state.matrix)
    return out


def from_dict(data: dict) -> State:
    reg = ModeRegister(tuple(zip(data["modes"], data["cutoffs"])))
    if "amps" in data:
        arr = np.asarray(data["amps"], dtype=float)
        return FockVector(reg, arr[..., 0] + 1j * arr[..., 1])
    arr = np.asarray(data["matrix"], dtype=float)
    return DensityOperator(reg, arr[..., 0] + 1j * arr[..., 1])


def dumps(state: State) -> str:
    return json.dumps(to_dict(state))


def loads(text: str) -> State:
    return from_dict(json.loads(text))
