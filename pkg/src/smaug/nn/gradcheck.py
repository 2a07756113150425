"""Central finite-difference verification of analytic gradients.

The checker perturbs every parameter entry by +-eps, re-evaluates the loss
with gradients disabled, and compares the two-sided difference quotient
against the gradient produced by backward(). Run networks in float64 when
checking; float32 forward noise swamps the difference quotient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tensor import Parameter, Tensor, no_grad

__all__ = ["GradCheckReport", "grad_check"]


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    passed: bool
    per_param: dict = field(default_factory=dict)

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        lines = [f"grad check: max rel error {self.max_rel_error:.3e} "
                 f"(tolerance {self.tolerance:.1e}) -> {status}"]
        for name, err in sorted(self.per_param.items(), key=lambda kv: -kv[1]):
            lines.append(f"  {name}: {err:.3e}")
        return "\n".join(lines)


def grad_check(named_params: Mapping[str, Parameter],
               loss_fn: Callable[[], Tensor],
               eps: float = 1e-4,
               tolerance: float = 1e-3) -> GradCheckReport:
    """Compare backward() gradients of loss_fn against central differences.

    loss_fn must be a deterministic closure over the parameters (re-sample
    inputs outside, not inside). Relative error per entry is
    |a - n| / max(|a|, |n|, 1e-6).
    """
    params = dict(named_params)
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }

    per_param: dict[str, float] = {}
    worst = 0.0
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            num = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = loss_fn().item()
                flat[i] = orig - eps
                f_minus = loss_fn().item()
                flat[i] = orig
                num[i] = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[name].reshape(-1)
            denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-6)
            err = float(np.max(np.abs(a - num) / denom)) if flat.size else 0.0
            per_param[name] = err
            worst = max(worst, err)
    for p in params.values():
        p.grad = None
    return GradCheckReport(max_rel_error=worst, tolerance=tolerance,
                           passed=worst <= tolerance, per_param=per_param)
