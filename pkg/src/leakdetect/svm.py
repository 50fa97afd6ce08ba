"""Soft-margin binary SVM trained with an SMO dual solver.

The solver works on the standard dual

    min_a  0.5 * a' Q a - sum(a)    s.t.  0 <= a_i <= C,  y' a = 0

with ``Q_ij = y_i y_j K(x_i, x_j)``. Each iteration picks the pair of
variables that violates the KKT conditions the most (``i`` by first-order
violation, ``j`` by the second-order gain among violators) and solves the
two-variable sub-problem analytically.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numba
import numpy as np

from ._io import atomic_write_text

log = logging.getLogger(__name__)

MODEL_FORMAT = "leakdetect-svm-model"
MODEL_VERSION = 1
_TAU = 1e-12


class SvmError(ValueError):
    pass


class ModelFileError(SvmError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "linear"
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise SvmError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf":
            if self.gamma is None or not self.gamma > 0:
                raise SvmError("rbf kernel needs gamma > 0")
        else:
            object.__setattr__(self, "gamma", None)

    def __call__(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.atleast_2d(A)
        B = np.atleast_2d(B)
        if self.kind == "linear":
            return A @ B.T
        sq = (
            np.sum(A * A, axis=1)[:, None]
            + np.sum(B * B, axis=1)[None, :]
            - 2.0 * (A @ B.T)
        )
        return np.exp(-self.gamma * np.maximum(sq, 0.0))

    def describe(self) -> str:
        return "linear" if self.kind == "linear" else f"rbf(gamma={self.gamma:g})"


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (X - self.mean) / safe, 0.0)


def fit_standardizer(X) -> Standardizer:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise SvmError("need a non-empty 2-D feature matrix")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # columns constant up to rounding are treated as constant
    std = np.where(std <= 1e-12 * np.maximum(np.abs(mean), 1e-300), 0.0, std)
    return Standardizer(mean, std)


def apply_standardizer(s: Standardizer, X) -> np.ndarray:
    return s.transform(X)


@dataclass(frozen=True, eq=False)
class SvmModel:
    kernel: KernelSpec
    C: float
    support_vectors: np.ndarray  # standardized rows
    dual_coefs: np.ndarray  # alpha_i * y_i
    bias: float
    standardizer: Standardizer
    feature_order: tuple[str, ...] = ()
    pipeline_meta: Mapping[str, Any] = field(default_factory=dict)
    converged: bool = True
    n_iter: int = 0

    @property
    def alphas(self) -> np.ndarray:
        return np.abs(self.dual_coefs)

    @property
    def n_features(self) -> int:
        return self.standardizer.mean.shape[0]

    def primal_weights(self) -> np.ndarray:
        if self.kernel.kind != "linear":
            raise SvmError("primal weights exist only for the linear kernel")
        return self.dual_coefs @ self.support_vectors


@dataclass
class _SmoResult:
    alpha: np.ndarray
    grad: np.ndarray
    rho: float
    n_iter: int
    converged: bool


@numba.njit(cache=True)
def _smo_loop(Q, y, Cv, alpha, grad, tol, max_iter):  # pragma: no cover - jitted
    n = y.shape[0]
    it = 0
    while it < max_iter:
        i = -1
        m = -np.inf
        low_min = np.inf
        for t in range(n):
            score = -y[t] * grad[t]
            if y[t] > 0:
                up = alpha[t] < Cv[t]
                low = alpha[t] > 0
            else:
                up = alpha[t] > 0
                low = alpha[t] < Cv[t]
            if up and score > m:
                m = score
                i = t
            if low and score < low_min:
                low_min = score
        if m - low_min < tol:
            return it, True
        # second-order choice of j among violating members of the low set
        j = -1
        best = np.inf
        for t in range(n):
            if y[t] > 0:
                low = alpha[t] > 0
            else:
                low = alpha[t] < Cv[t]
            if not low:
                continue
            b = m + y[t] * grad[t]
            if b <= 0:
                continue
            a = Q[i, i] + Q[t, t] - 2.0 * y[i] * y[t] * Q[i, t]
            if a <= 0:
                a = _TAU
            g = -(b * b) / a
            if g < best:
                best = g
                j = t
        b = m + y[j] * grad[j]
        a = Q[i, i] + Q[j, j] - 2.0 * y[i] * y[j] * Q[i, j]
        if a <= 0:
            a = _TAU
        ai_old = alpha[i]
        aj_old = alpha[j]
        ai = ai_old + y[i] * b / a
        total = y[i] * ai_old + y[j] * aj_old
        ai = min(max(ai, 0.0), Cv[i])
        aj = y[j] * (total - y[i] * ai)
        aj = min(max(aj, 0.0), Cv[j])
        ai = y[i] * (total - y[j] * aj)
        d_i = ai - ai_old
        d_j = aj - aj_old
        alpha[i] = ai
        alpha[j] = aj
        for t in range(n):
            grad[t] += Q[t, i] * d_i + Q[t, j] * d_j
        it += 1
    return it, False


def _smo(K: np.ndarray, y: np.ndarray, Cv: np.ndarray, tol: float, max_iter: int) -> _SmoResult:
    Q = np.ascontiguousarray((y[:, None] * y[None, :]) * K)
    alpha = np.zeros(y.shape[0])
    grad = -np.ones(y.shape[0])
    n_iter, converged = _smo_loop(Q, y, Cv, alpha, grad, float(tol), int(max_iter))
    rho = _rho(alpha, grad, y, Cv)
    return _SmoResult(alpha, grad, rho, int(n_iter), bool(converged))


def _rho(alpha, grad, y, Cv) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < Cv)
    if free.any():
        return float(yg[free].mean())
    at_upper = alpha >= Cv
    # bounds from points sitting at either end of the box
    ub_mask = np.where(at_upper, y < 0, y > 0)
    lb_mask = ~ub_mask
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    if not np.isfinite(ub):
        return float(lb)
    if not np.isfinite(lb):
        return float(ub)
    return float((ub + lb) / 2.0)


def train(X, y, C: float = 1.0, kernel: KernelSpec | None = None, tol: float = 1e-3,
          max_passes: int = 1000, class_weight: Mapping[int, float] | None = None,
          feature_order: Sequence[str] = (), pipeline_meta: Mapping[str, Any] | None = None
          ) -> SvmModel:
    """Fit a soft-margin SVM on raw features; ``y`` holds -1/+1 labels.

    Features are standardized with statistics from ``X``. The solver stops
    when the maximal KKT violation drops below ``tol`` or after
    ``max_passes * n`` pair updates; in the latter case the model is returned
    with ``converged=False``.
    """
    kernel = kernel or KernelSpec("linear")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise SvmError("X must be 2-D with one row per label")
    if not np.all(np.isfinite(X)):
        raise SvmError("non-finite feature values")
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise SvmError("labels must be -1 or +1")
    if np.unique(y).size < 2:
        raise SvmError("training data contains a single class")
    if not C > 0:
        raise SvmError("C must be positive")
    if feature_order and len(feature_order) != X.shape[1]:
        raise SvmError("feature_order does not match the number of columns")

    std = fit_standardizer(X)
    Xs = std.transform(X)
    K = kernel(Xs, Xs)
    Cv = np.full(y.shape[0], float(C))
    if class_weight:
        for label, wgt in class_weight.items():
            Cv[y == (1.0 if label in (1, 1.0) else -1.0)] *= float(wgt)
    n = y.shape[0]
    res = _smo(K, y, Cv, tol, max(1, int(max_passes)) * n)
    if not res.converged:
        log.warning("SMO stopped after %d iterations without reaching tol=%g", res.n_iter, tol)
    sv = res.alpha > 0
    return SvmModel(
        kernel=kernel,
        C=float(C),
        support_vectors=Xs[sv].copy(),
        dual_coefs=(res.alpha * y)[sv].copy(),
        bias=-res.rho,
        standardizer=std,
        feature_order=tuple(feature_order),
        pipeline_meta=dict(pipeline_meta or {}),
        converged=res.converged,
        n_iter=res.n_iter,
    )


def _decision_standardized(model: SvmModel, Xs: np.ndarray) -> np.ndarray:
    return model.kernel(Xs, model.support_vectors) @ model.dual_coefs + model.bias


def decision_function(model: SvmModel, x_raw) -> np.ndarray | float:
    x = np.asarray(x_raw, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != model.n_features:
        raise SvmError(f"expected {model.n_features} features, got {X.shape[1]}")
    f = _decision_standardized(model, model.standardizer.transform(X))
    return float(f[0]) if single else f


def predict(model: SvmModel, x_raw) -> np.ndarray | int:
    """1 (leak) iff the decision value is strictly positive."""
    f = decision_function(model, x_raw)
    if isinstance(f, float):
        return int(f > 0)
    return (f > 0).astype(np.int8)


def dual_objective(alpha, y, K) -> float:
    """Value of sum(a) - 0.5 a'Qa (the maximised form of the dual)."""
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


def kkt_residuals(model: SvmModel, X, y, tol: float = 1e-3) -> np.ndarray:
    """Boolean mask of training points meeting their KKT case within ``tol``.

    ``X`` must be the raw training matrix the model was fitted on.
    """
    y = np.asarray(y, dtype=np.float64)
    Xs = model.standardizer.transform(np.asarray(X, dtype=np.float64))
    margin = y * _decision_standardized(model, Xs)
    alpha = np.zeros(y.shape[0])
    # map support vectors back to rows by exact match on standardized rows
    index = {row.tobytes(): k for k, row in enumerate(Xs)}
    for sv, coef in zip(model.support_vectors, model.dual_coefs):
        alpha[index[sv.tobytes()]] = abs(coef)
    C = model.C
    ok = np.where(
        alpha <= 0,
        margin >= 1 - tol,
        np.where(alpha >= C, margin <= 1 + tol, np.abs(margin - 1) <= tol),
    )
    return ok


# ---------------------------------------------------------- serialization


def _hex(v: float) -> str:
    return float(v).hex()


def _hex_list(a) -> list:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        return [_hex(v) for v in a.tolist()]
    return [_hex_list(row) for row in a]


def _unhex(a) -> np.ndarray:
    if a and isinstance(a[0], list):
        return np.array([[float.fromhex(v) for v in row] for row in a], dtype=np.float64)
    return np.array([float.fromhex(v) for v in a], dtype=np.float64)


def model_to_dict(model: SvmModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kernel": {"kind": model.kernel.kind,
                   "gamma": None if model.kernel.gamma is None else _hex(model.kernel.gamma)},
        "C": _hex(model.C),
        "bias": _hex(model.bias),
        "converged": model.converged,
        "n_iter": model.n_iter,
        "feature_order": list(model.feature_order),
        "standardizer": {"mean": _hex_list(model.standardizer.mean),
                         "std": _hex_list(model.standardizer.std)},
        "n_support": int(model.dual_coefs.shape[0]),
        "dual_coefs": _hex_list(model.dual_coefs),
        "support_vectors": _hex_list(model.support_vectors),
        "pipeline_meta": model.pipeline_meta,
    }


def model_from_dict(d: Mapping) -> SvmModel:
    if not isinstance(d, Mapping) or d.get("format") != MODEL_FORMAT:
        raise ModelFileError("not a leakdetect model file (bad magic)")
    if d.get("version") != MODEL_VERSION:
        raise ModelFileError(f"unsupported model version {d.get('version')!r}")
    try:
        k = d["kernel"]
        kernel = KernelSpec(k["kind"], None if k["gamma"] is None else float.fromhex(k["gamma"]))
        n_feat = len(d["standardizer"]["mean"])
        sv = _unhex(d["support_vectors"]).reshape(-1, n_feat)
        return SvmModel(
            kernel=kernel,
            C=float.fromhex(d["C"]),
            support_vectors=sv,
            dual_coefs=_unhex(d["dual_coefs"]),
            bias=float.fromhex(d["bias"]),
            standardizer=Standardizer(_unhex(d["standardizer"]["mean"]), _unhex(d["standardizer"]["std"])),
            feature_order=tuple(d["feature_order"]),
            pipeline_meta=d.get("pipeline_meta", {}),
            converged=bool(d["converged"]),
            n_iter=int(d["n_iter"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"corrupt model file: {exc}") from None


def dumps_model(model: SvmModel) -> str:
    return json.dumps(model_to_dict(model), indent=1) + "\n"


def save_model(model: SvmModel, path: str | Path) -> None:
    atomic_write_text(Path(path), dumps_model(model))


def load_model(path: str | Path) -> SvmModel:
    try:
        d = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFileError(f"corrupt model file: {exc}") from None
    return model_from_dict(d)
