"""Filter configuration, state containers and the shared body-frame innovation."""

from __future__ import annotations

import enum
from functools import cached_property
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..geom3 import cross, proj_sym, rotate_to_body, skew


class FilterKind(str, enum.Enum):
    GAME = "GAME"
    MEKF = "MEKF"
    RIEKF = "RIEKF"
    USQUE = "USQUE"
    CGO = "CGO"


class NumericalDivergence(ArithmeticError):
    """A state or gain entry became non-finite."""


class AntipodalError(ArithmeticError):
    """Error quaternion too close to the GRP singularity ``a + dq4 = 0``."""


class CholeskyFailure(np.linalg.LinAlgError):
    """The unscented spread matrix is not positive definite."""


@dataclass(frozen=True)
class FilterConfig:
    """Model matrices and initial gains handed to a filter.

    ``R`` holds one 3x3 covariance per reference direction, in the same
    order as ``ref_dirs``. ``Pa0``/``Pb0``/``Pc0`` are the attitude, bias
    and coupling blocks; the unscented filter assembles its 6x6 covariance
    from the same blocks.
    """

    Q_omega: np.ndarray
    Q_bias: np.ndarray
    R: tuple[np.ndarray, ...]
    ref_dirs: np.ndarray
    Pa0: np.ndarray
    Pb0: np.ndarray
    Pc0: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    riekf_variant: str = "corrected"  # or "original"
    game_riccati: str = "table"  # or "equation"
    bias_enabled: bool = True
    # multipliers on P_a / P_c where they act as observer gains
    gain_scale_a: float = 1.0
    gain_scale_c: float = 1.0
    cgo_kp: float = 1.0
    cgo_ki: float = 0.3
    usque_a: float = 1.0
    usque_f: float = 4.0
    usque_lam: float = 1.0

    def __post_init__(self):
        if self.riekf_variant not in ("corrected", "original"):
            raise ValueError(f"riekf_variant must be 'corrected' or 'original', not {self.riekf_variant!r}")
        if self.game_riccati not in ("table", "equation"):
            raise ValueError(f"game_riccati must be 'table' or 'equation', not {self.game_riccati!r}")
        refs = np.ascontiguousarray(np.asarray(self.ref_dirs, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "ref_dirs", refs)
        if len(self.R) != refs.shape[0]:
            raise ValueError("need one R matrix per reference direction")
        for name in ("Q_omega", "Q_bias", "Pa0", "Pb0", "Pc0"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "R", tuple(np.asarray(r, dtype=float) for r in self.R))

    @cached_property
    def R_inv(self) -> np.ndarray:
        return np.ascontiguousarray(np.stack([np.linalg.inv(r) for r in self.R]))

    @cached_property
    def R_stacked(self) -> np.ndarray:
        m = len(self.R)
        out = np.zeros((3 * m, 3 * m))
        for i, r in enumerate(self.R):
            out[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = r
        return out


@dataclass(frozen=True)
class RiccatiState:
    q: np.ndarray
    b: np.ndarray
    Pa: np.ndarray
    Pb: np.ndarray
    Pc: np.ndarray


@dataclass(frozen=True)
class CgoState:
    q: np.ndarray
    b: np.ndarray
    kp: float
    ki: float

    def __post_init__(self):
        if not (self.kp > 0 and self.ki > 0):
            raise ValueError("CGO gains must be positive")


@dataclass(frozen=True)
class UsqueState:
    """Unscented filter state.

    ``x`` is ``[dp, b]`` (GRP attitude error then bias), or just ``dp`` when
    bias estimation is off. ``dp`` is zero between steps.
    """

    q: np.ndarray
    x: np.ndarray
    P: np.ndarray
    a: float = 1.0
    f: float = 4.0
    lam: float = 1.0

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def b(self) -> np.ndarray:
        return self.x[3:6] if self.n == 6 else np.zeros(3)


FilterState = RiccatiState | CgoState | UsqueState


def check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalDivergence("non-finite entry in filter state or gains")


@njit(cache=True, nogil=True)
def body_innovation(q, ys, refs, Rinv):
    """Predicted directions, ``Delta = sum yhat x Rinv (yhat - y)``, and the
    ``S``/``C`` curvature sums used by the body-frame Riccati filters."""
    m = refs.shape[0]
    yhat = np.empty((m, 3))
    delta = np.zeros(3)
    S = np.zeros((3, 3))
    C = np.zeros((3, 3))
    for i in range(m):
        yh = rotate_to_body(q, refs[i])
        yhat[i] = yh
        r = Rinv[i] @ (yh - ys[i])
        delta += cross(yh, r)
        Y = skew(yh)
        S += Y.T @ Rinv[i] @ Y
        C += proj_sym(np.outer(r, yh))
    return delta, yhat, S, C


def innovation_body(q, ys, cfg: FilterConfig):
    """Body-frame innovation ``Delta`` and predicted directions ``yhat_i``."""
    delta, yhat, _, _ = body_innovation(
        np.asarray(q, dtype=float), np.ascontiguousarray(ys, dtype=float), cfg.ref_dirs, cfg.R_inv
    )
    return delta, yhat
