"""Problem descriptions consumed by the solvers."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .matrix import as_mat, is_psd, min_singular_value


def _frozen(m, name):
    m = as_mat(m, name, copy=True)
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class LinearSystem:
    """Dynamics ``x_{t+1} = A x_t + B u_t + w_t``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _frozen(self.A, "A")
        B = _frozen(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionError(f"B has {B.shape[0]} rows but A is {A.shape[0]}x{A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class CostParams:
    """Quadratic stage cost ``x'Qx + u'Ru``.

    ``Q`` must be PSD and ``R`` PD (checked with tolerance 1e-10). Whether
    ``sigma_min(R) >= 1`` holds is only reported, via ``r_normalized``;
    rescaling is left to the caller.
    """

    Q: np.ndarray
    R: np.ndarray
    q_positive_definite: bool = field(init=False)
    r_normalized: bool = field(init=False)

    def __post_init__(self):
        Q = _frozen(self.Q, "Q")
        R = _frozen(self.R, "R")
        for name, m in (("Q", Q), ("R", R)):
            if m.shape[0] != m.shape[1]:
                raise DimensionError(f"{name} must be square, got {m.shape}")
        if not is_psd(Q, 1e-10):
            raise DimensionError("Q must be positive semidefinite")
        if not is_psd(R, 1e-10) or np.linalg.eigvalsh(R)[0] <= 1e-10:
            raise DimensionError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "q_positive_definite", bool(np.linalg.eigvalsh(Q)[0] > 1e-10))
        object.__setattr__(self, "r_normalized", bool(min_singular_value(R) >= 1.0))

    def check_against(self, sys: LinearSystem):
        if self.Q.shape[0] != sys.n or self.R.shape[0] != sys.d:
            raise DimensionError(
                f"cost shapes Q{self.Q.shape}, R{self.R.shape} do not match n={sys.n}, d={sys.d}")

    def scaled(self, alpha: float) -> "CostParams":
        return CostParams(alpha * self.Q, alpha * self.R)


@dataclass(frozen=True)
class LQGSystem:
    """Partially observed plant with output cost ``y'Qy + u'Ru``.

    ``W`` and ``V`` are the process and observation noise covariances;
    the isotropic case is ``W = sigma_w^2 I``, ``V = sigma_v^2 I``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    W: np.ndarray
    V: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        mats = {k: _frozen(getattr(self, k), k) for k in "A B C W V Q R".split()}
        n = mats["A"].shape[0]
        d = mats["B"].shape[1]
        p = mats["C"].shape[0]
        expected = {"A": (n, n), "B": (n, d), "C": (p, n), "W": (n, n),
                    "V": (p, p), "Q": (p, p), "R": (d, d)}
        for k, shape in expected.items():
            if mats[k].shape != shape:
                raise DimensionError(f"{k} has shape {mats[k].shape}, expected {shape}")
        for k in ("W", "Q"):
            if not is_psd(mats[k], 1e-10):
                raise DimensionError(f"{k} must be positive semidefinite")
        for k in ("V", "R"):
            if not is_psd(mats[k], 1e-10) or np.linalg.eigvalsh(mats[k])[0] <= 1e-10:
                raise DimensionError(f"{k} must be positive definite")
        for k, m in mats.items():
            object.__setattr__(self, k, m)

    @classmethod
    def isotropic(cls, A, B, C, Q, R, sigma_w=1.0, sigma_v=1.0):
        n = np.atleast_2d(A).shape[0]
        p = np.atleast_2d(C).shape[0]
        return cls(A, B, C, sigma_w ** 2 * np.eye(n), sigma_v ** 2 * np.eye(p), Q, R)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def state_cost(self) -> np.ndarray:
        """``C' Q C``, the output cost pulled back to the state."""
        return self.C.T @ self.Q @ self.C

    def linear_system(self) -> LinearSystem:
        return LinearSystem(self.A, self.B)

    def transformed(self, T) -> "LQGSystem":
        """Equivalent plant in coordinates ``z = T x``."""
        T = as_mat(T, "T")
        Ti = np.linalg.inv(T)
        return LQGSystem(T @ self.A @ Ti, T @ self.B, self.C @ Ti,
                         T @ self.W @ T.T, self.V, self.Q, self.R)
