"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


class NondeterministicBuilderError(RuntimeError):
    pass


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.errors.values())

    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)

    def __str__(self) -> str:
        lines = [f"{name}: {err:.3e}" for name, err in self.errors.items()]
        lines.append(f"{'PASS' if self.passed else 'FAIL'} (tol {self.tolerance:g})")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero entries from dominating."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numerical_gradient(
    builder: Callable[[], Tensor],
    p: Tensor,
    step: float = 1e-5,
    indices: np.ndarray | None = None,
) -> np.ndarray:
    """Central differences of the loss w.r.t. the flat entries ``indices`` of ``p`` (all by default)."""
    flat = p.data.reshape(-1)
    if indices is None:
        indices = np.arange(flat.size)
    out = np.empty(len(indices))
    for n, j in enumerate(indices):
        orig = flat[j]
        flat[j] = orig + step
        up = builder().item()
        flat[j] = orig - step
        down = builder().item()
        flat[j] = orig
        out[n] = (up - down) / (2.0 * step)
    return out


def grad_check(
    builder: Callable[[], Tensor],
    params: Sequence[Tensor] | dict[str, Tensor],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    floor: float = 1e-6,
    max_entries: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare tape gradients to central differences for every parameter.

    ``builder`` must rebuild the scalar loss from the current parameter
    values each time it is called. With ``max_entries`` set, at most that
    many entries per parameter (chosen by ``seed``) are differenced.
    """
    rng = np.random.default_rng(seed)
    named = dict(params) if isinstance(params, dict) else {
        (p.name or f"param{i}"): p for i, p in enumerate(params)
    }
    report = GradCheckReport(tolerance)
    if not named:
        return report
    first, second = builder().item(), builder().item()
    if first != second:
        raise NondeterministicBuilderError(
            f"builder returned {first!r} then {second!r} for identical parameters"
        )
    saved = {k: p.requires_grad for k, p in named.items()}
    for p in named.values():
        p.requires_grad = True
        p.grad = None
    try:
        with Tape() as tape:
            loss = builder()
        backward(tape, loss, named.values())
        for name, p in named.items():
            if max_entries is not None and p.size > max_entries:
                idx = np.sort(rng.choice(p.size, size=max_entries, replace=False))
            else:
                idx = np.arange(p.size)
            analytic = p.grad.reshape(-1)[idx]
            numeric = numerical_gradient(builder, p, step, idx)
            report.errors[name] = float(relative_error(analytic, numeric, floor).max(initial=0.0))
    finally:
        for k, p in named.items():
            p.requires_grad = saved[k]
            p.grad = None
    return report
