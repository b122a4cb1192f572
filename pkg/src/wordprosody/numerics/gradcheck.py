from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


class GradCheckError(RuntimeError):
    pass


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_input: int
    worst_index: tuple
    analytic: float
    numeric: float
    n_coords: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} max_rel_err={self.max_rel_err:.3e} (tol {self.tol:.0e}) over {self.n_coords} coords; "
                f"worst input {self.worst_input}{list(self.worst_index)}: analytic={self.analytic:.6e} numeric={self.numeric:.6e}")


def grad_check(f: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-6, tol: float = 1e-4,
               floor: float = 1e-6, max_coords: int | None = None, rng: np.random.Generator | None = None
               ) -> GradCheckReport:
    """Compare analytic gradients of scalar ``f()`` against central differences.

    ``f`` closes over ``inputs`` and is re-evaluated after each in-place
    perturbation. Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    ``max_coords`` caps the number of coordinates tested per input (sampled
    with ``rng``) for large parameter sets.
    """
    for x in inputs:
        x.grad = None
    out = f()
    if out.data.size != 1:
        raise GradCheckError(f"grad_check needs a scalar function, got shape {out.shape}")
    out.backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]

    worst = (0.0, 0, (), 0.0, 0.0)
    count = 0
    for k, x in enumerate(inputs):
        coords = list(np.ndindex(x.shape))
        if max_coords is not None and len(coords) > max_coords:
            rng = rng or np.random.default_rng(0)
            pick = rng.choice(len(coords), size=max_coords, replace=False)
            coords = [coords[i] for i in sorted(pick)]
        for idx in coords:
            orig = x.data[idx]
            x.data[idx] = orig + eps
            fp = f().data.item()
            x.data[idx] = orig - eps
            fm = f().data.item()
            x.data[idx] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise GradCheckError(f"non-finite function value at input {k} coordinate {idx}")
            num = (fp - fm) / (2 * eps)
            ana = float(analytic[k][idx])
            rel = abs(ana - num) / max(abs(ana), abs(num), floor)
            count += 1
            if rel > worst[0]:
                worst = (rel, k, idx, ana, num)
    return GradCheckReport(worst[0], worst[1], tuple(int(i) for i in worst[2]), worst[3], worst[4], count, tol)
