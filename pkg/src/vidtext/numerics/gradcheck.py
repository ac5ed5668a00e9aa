"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional

import numpy as np

from ..errors import NumericError
from .tensor import Tensor, no_grad


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    max_abs_err: float
    n_checked: int
    passed: bool


@dataclass
class GradReport:
    params: Dict[str, ParamCheck] = field(default_factory=dict)
    tol: float = 1e-4
    abs_floor: float = 1e-8

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.params.values())

    @property
    def worst(self) -> Optional[ParamCheck]:
        if not self.params:
            return None
        return max(self.params.values(), key=lambda p: (not p.passed, p.max_rel_err))

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "tol": self.tol,
            "abs_floor": self.abs_floor,
            "params": {
                n: {"max_rel_err": p.max_rel_err, "max_abs_err": p.max_abs_err,
                    "n_checked": p.n_checked, "pass": p.passed}
                for n, p in self.params.items()
            },
        }


def _pick_entries(analytic: np.ndarray, max_entries: Optional[int], rng: np.random.Generator) -> np.ndarray:
    size = analytic.size
    if max_entries is None or size <= max_entries:
        return np.arange(size)
    # half the budget on the largest analytic entries, half uniformly at random
    n_top = max_entries // 2
    flat = np.abs(analytic.reshape(-1))
    top = np.argsort(-flat, kind="stable")[:n_top]
    rest = np.setdiff1d(np.arange(size), top)
    rand = rng.choice(rest, size=max_entries - n_top, replace=False)
    return np.sort(np.concatenate([top, rand]))


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    eps: float = 1e-4,
    tol: float = 1e-4,
    abs_floor: float = 1e-8,
    max_entries: Optional[int] = None,
    seed: int = 0,
    grad_hook: Optional[Callable[[str, np.ndarray], np.ndarray]] = None,
) -> GradReport:
    """Compare backprop gradients of ``loss_fn`` with central differences.

    An entry passes when its relative error is within ``tol`` or its
    absolute error is below ``abs_floor``. ``max_entries`` caps the number
    of entries probed per parameter (the largest-magnitude analytic entries
    plus a seeded random sample). ``grad_hook`` may rewrite the analytic
    gradient before comparison; it exists to sanity-check the detector.
    """
    for p in params.values():
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is not finite")
    loss.backward()
    rng = np.random.default_rng(seed)
    report = GradReport(tol=tol, abs_floor=abs_floor)
    for name, p in params.items():
        analytic = np.array(p.grad, dtype=np.float64, copy=True)
        if grad_hook is not None:
            analytic = grad_hook(name, analytic)
        idx = _pick_entries(analytic, max_entries, rng)
        flat = p.data.reshape(-1)
        numeric = np.empty(len(idx))
        with no_grad():
            for k, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + eps
                fp = loss_fn().item()
                flat[i] = orig - eps
                fm = loss_fn().item()
                flat[i] = orig
                if not (np.isfinite(fp) and np.isfinite(fm)):
                    raise NumericError(f"loss not finite while perturbing {name}[{i}]")
                numeric[k] = (fp - fm) / (2 * eps)
        a = analytic.reshape(-1)[idx]
        abs_err = np.abs(a - numeric)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), np.finfo(np.float64).tiny)
        rel_err = abs_err / denom
        ok = (rel_err <= tol) | (abs_err <= abs_floor)
        # entries rescued by the absolute floor do not count toward the worst relative error
        rel_counted = np.where(abs_err <= abs_floor, 0.0, rel_err)
        report.params[name] = ParamCheck(
            name=name,
            max_rel_err=float(rel_counted.max()) if len(idx) else 0.0,
            max_abs_err=float(abs_err.max()) if len(idx) else 0.0,
            n_checked=int(len(idx)),
            passed=bool(ok.all()),
        )
    return report
