"""JSON system files and CSV tables.

A system file is a JSON object with row-major matrices under ``A`` and
``B`` and optional ``C``, ``Q``, ``R``, ``W``, ``V``, ``sigma_w``,
``sigma_v``. Scalars are accepted wherever a 1x1 matrix is expected.
"""

import json
import re
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CerteqError, SchemaError
from .systems import CostParams, LinearSystem, LQGSystem

MATRIX_KEYS = ("A", "B", "C", "Q", "R", "W", "V")
SCALAR_KEYS = ("sigma_w", "sigma_v")


def _position(text: str, key: Optional[str]) -> Tuple[int, int]:
    """1-based line and column of ``"key":`` in ``text`` (1, 1 if absent)."""
    if key is not None:
        m = re.search(r'"%s"\s*:' % re.escape(key), text)
        if m:
            line = text.count("\n", 0, m.start()) + 1
            col = m.start() - (text.rfind("\n", 0, m.start()) + 1) + 1
            return line, col
    return 1, 1


def _schema_error(text, key, message):
    line, col = _position(text, key)
    where = f"key {key!r}" if key else "document"
    err = SchemaError(f"line {line}, column {col}: {where}: {message}")
    err.key, err.line, err.column = key, line, col
    return err


def _matrix(value, key, text):
    if isinstance(value, bool):
        raise _schema_error(text, key, "expected a number or array of arrays of numbers")
    if isinstance(value, (int, float)):
        return np.array([[float(value)]])
    if not isinstance(value, list) or not value:
        raise _schema_error(text, key, "expected a non-empty array of arrays of numbers")
    rows = value if all(isinstance(r, list) for r in value) else None
    if rows is None:
        raise _schema_error(text, key, "expected an array of arrays (row-major matrix)")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise _schema_error(text, key, f"row {i} has {len(r)} entries, expected {width}")
        for v in r:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise _schema_error(text, key, f"row {i} contains non-numeric entry {v!r}")
    m = np.array(rows, dtype=float)
    if not np.all(np.isfinite(m)):
        raise _schema_error(text, key, "entries must be finite")
    return m


@dataclass(frozen=True)
class SystemFile:
    A: np.ndarray
    B: np.ndarray
    C: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    W: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    sigma_w: float = 1.0
    sigma_v: float = 1.0
    source: str = ""

    @classmethod
    def parse(cls, text: str, source: str = "<string>") -> "SystemFile":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            err = SchemaError(f"line {exc.lineno}, column {exc.colno}: invalid JSON: {exc.msg}")
            err.key, err.line, err.column = None, exc.lineno, exc.colno
            raise err from None
        if not isinstance(doc, dict):
            raise _schema_error(text, None, "top level must be a JSON object")
        unknown = sorted(set(doc) - set(MATRIX_KEYS) - set(SCALAR_KEYS))
        if unknown:
            raise _schema_error(text, unknown[0], "unknown key")
        for k in ("A", "B"):
            if k not in doc:
                raise _schema_error(text, None, f"missing required key {k!r}")
        mats = {k: _matrix(doc[k], k, text) for k in MATRIX_KEYS if k in doc}
        scalars = {}
        for k in SCALAR_KEYS:
            if k in doc:
                v = doc[k]
                if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
                    raise _schema_error(text, k, "expected a nonnegative number")
                scalars[k] = float(v)
        return cls(source=source, **mats, **scalars)

    @classmethod
    def load(cls, path: str) -> "SystemFile":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read(), source=path)

    def _wrap(self, key, build):
        try:
            return build()
        except CerteqError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"{self.source}: {key}: {exc}") from exc

    def linear_system(self) -> LinearSystem:
        return self._wrap("A/B", lambda: LinearSystem(self.A, self.B))

    def cost(self) -> CostParams:
        """State cost; with an output matrix ``C`` the file's ``Q`` weights outputs."""
        n, d = self.A.shape[0], self.B.shape[1]
        Q = np.eye(n if self.C is None else self.C.shape[0]) if self.Q is None else self.Q
        R = np.eye(d) if self.R is None else self.R
        if self.C is not None:
            return self._wrap("C/Q", lambda: CostParams(self.C.T @ Q @ self.C, R))
        return self._wrap("Q/R", lambda: CostParams(Q, R))

    @property
    def has_output(self) -> bool:
        return self.C is not None

    def lqg_system(self) -> LQGSystem:
        if self.C is None:
            raise SchemaError(f"{self.source}: key 'C' is required for a partially observed system")
        n, p, d = self.A.shape[0], self.C.shape[0], self.B.shape[1]
        W = self.sigma_w ** 2 * np.eye(n) if self.W is None else self.W
        V = self.sigma_v ** 2 * np.eye(p) if self.V is None else self.V
        Q = np.eye(p) if self.Q is None else self.Q
        R = np.eye(d) if self.R is None else self.R
        return self._wrap("plant", lambda: LQGSystem(self.A, self.B, self.C, W, V, Q, R))


def format_value(v) -> str:
    """17-significant-digit floats; ints and strings verbatim."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(stream, header: Sequence[str], rows: Iterable[Sequence], meta: Sequence[Tuple[str, object]] = ()):
    """Write ``#`` metadata lines, a header row and data rows with UNIX newlines."""
    lines: List[str] = [f"# {k}: {format_value(v)}" for k, v in meta]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    stream.write("\n".join(lines) + "\n")


def matrix_to_json(m) -> list:
    return [[float(x) for x in row] for row in np.atleast_2d(m)]
