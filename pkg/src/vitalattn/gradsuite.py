"""Finite-difference checks over every differentiable op and both wrapped models."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import numerics as nx
from .attention import AttentionForecaster, AttentionParams, project_qkv, scaled_dot_attention
from .nbeats import NBeatsModel
from .nhits import NHitsModel, interpolate_coeffs, multirate_pool
from .numerics import Tensor, grad_check
from .rng import derive_seed

OP_TOLERANCE = 1e-4
MODEL_TOLERANCE = 1e-3


@dataclass
class SuiteResult:
    name: str
    trial: int
    worst: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance


def _param(rng, *shape) -> Tensor:
    return Tensor(rng.uniform(-2.0, 2.0, shape), requires_grad=True)


def _away_from_zero(rng, *shape, margin=0.05) -> Tensor:
    x = rng.uniform(-2.0, 2.0, shape)
    x = np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)
    return Tensor(x, requires_grad=True)


def _weighted(out: Tensor, rng) -> Tensor:
    """Random fixed projection to a scalar so every output entry matters."""
    return Tensor(rng.uniform(-1.0, 1.0, out.shape))


def _op_cases(rng) -> dict[str, tuple[Callable[[], Tensor], dict[str, Tensor]]]:
    cases = {}

    def reduce(f):
        w = _weighted(f(), rng)
        return lambda: nx.sum_(nx.mul(f(), w))

    a, b = _param(rng, 3, 4), _param(rng, 4, 2)
    cases["matmul"] = (reduce(lambda: nx.matmul(a, b)), {"a": a, "b": b})
    x = _away_from_zero(rng, 5)
    cases["relu"] = (reduce(lambda: nx.relu(x)), {"x": x})
    y = _away_from_zero(rng, 5)
    cases["abs"] = (reduce(lambda: nx.abs_(y)), {"x": y})
    u, v = _param(rng, 2, 3), _param(rng, 2, 3)
    cases["add"] = (reduce(lambda: nx.add(u, v)), {"a": u, "b": v})
    cases["sub"] = (reduce(lambda: nx.sub(u, v)), {"a": u, "b": v})
    cases["mul"] = (reduce(lambda: nx.mul(u, v)), {"a": u, "b": v})
    s = _param(rng, 4)
    cases["scale"] = (reduce(lambda: nx.scale(s, -1.7)), {"x": s})
    m = _param(rng, 3, 5)
    cases["softmax_rows"] = (reduce(lambda: nx.softmax_rows(m)), {"x": m})
    cases["transpose"] = (reduce(lambda: nx.transpose(m)), {"x": m})
    p = _param(rng, 2, 7)
    cases["maxpool1d"] = (reduce(lambda: nx.maxpool1d(p, 3)), {"x": p})
    ln_x, gain, bias = _param(rng, 2, 6), _param(rng, 6), _param(rng, 6)
    cases["layer_norm"] = (reduce(lambda: nx.layer_norm(ln_x, gain, bias, 1e-5)), {"x": ln_x, "gain": gain, "bias": bias})
    pr, tg = _param(rng, 2, 4), _param(rng, 2, 4)
    cases["mse_loss"] = (lambda: nx.mse_loss(pr, tg), {"pred": pr, "target": tg})
    mp = _param(rng, 2, 3, 8)
    cases["multirate_pool"] = (reduce(lambda: multirate_pool(mp, 3)), {"x": mp})
    th = _param(rng, 3, 4)
    cases["interpolate_coeffs"] = (reduce(lambda: interpolate_coeffs(th, 9)), {"theta": th})

    N, L, H = 2, 8, 4
    params = AttentionParams.create(N, L, H, seed=int(rng.integers(1 << 31)))
    inputs = Tensor(rng.uniform(-2.0, 2.0, (3, N, L)))
    base_fc = _param(rng, 3, H)

    def head():
        Q, K, V = project_qkv(inputs, base_fc, params)
        return scaled_dot_attention(Q, K, V)[1]

    named = dict(params.named_parameters())
    for k in ("ln_gain", "ln_bias", "out_w", "out_b"):
        named.pop(f"attn.{k}")
    named["base_forecast"] = base_fc
    cases["attention_head"] = (reduce(head), named)
    return cases


def _model_cases(rng, seed: int) -> dict[str, tuple[Callable[[], Tensor], dict[str, Tensor]]]:
    N, L, H, width = 2, 8, 4, 16
    bases = {
        "nbeats+attention": NBeatsModel(N, L, H, n_stacks=2, n_blocks=2, width=width, seed=seed),
        "nhits+attention": NHitsModel(N, L, H, kernels=(4, 2), ratios=(2, 1), n_blocks=2, width=width, seed=seed),
    }
    cases = {}
    for name, base in bases.items():
        model = AttentionForecaster(base, seed=seed + 1)
        # the output layer starts at zero; give it weight so the head's gradients are exercised
        model.params.out_w.data[...] = rng.uniform(-0.5, 0.5, model.params.out_w.shape)
        x = Tensor(rng.uniform(-2.0, 2.0, (3, N, L)))
        y = Tensor(rng.uniform(-2.0, 2.0, (3, H)))
        cases[name] = (lambda m=model, x=x, y=y: nx.mse_loss(m(x), y), dict(model.named_parameters()))
    return cases


def run_gradcheck_suite(
    seed: int = 0,
    trials: int = 20,
    model_entries: int = 3,
    log: Callable[[str], None] | None = None,
) -> list[SuiteResult]:
    """Run every case for ``trials`` seeded draws.

    For the full models only ``model_entries`` entries of each parameter
    tensor are differenced per trial (a different sample each trial).
    """
    results = []
    for trial in range(trials):
        trial_seed = derive_seed(seed, trial)
        rng = np.random.default_rng(trial_seed)
        for name, (builder, params) in _op_cases(rng).items():
            rep = grad_check(builder, params, tolerance=OP_TOLERANCE)
            results.append(SuiteResult(name, trial, rep.worst, OP_TOLERANCE))
        for name, (builder, params) in _model_cases(rng, int(trial_seed % (1 << 31))).items():
            rep = grad_check(builder, params, tolerance=MODEL_TOLERANCE, max_entries=model_entries, seed=trial_seed)
            results.append(SuiteResult(name, trial, rep.worst, MODEL_TOLERANCE))
        if log is not None:
            worst = max(r.worst for r in results if r.trial == trial)
            log(f"trial {trial}: worst relative error {worst:.2e}")
    return results


def summarize(results: list[SuiteResult]) -> dict[str, tuple[float, float, bool]]:
    out: dict[str, tuple[float, float, bool]] = {}
    for r in results:
        worst, tol, ok = out.get(r.name, (0.0, r.tolerance, True))
        out[r.name] = (max(worst, r.worst), tol, ok and r.passed)
    return out


def main(seed: int = 0, trials: int = 20) -> bool:
    start = time.perf_counter()
    results = run_gradcheck_suite(seed, trials)
    ok = True
    for name, (worst, tol, passed) in summarize(results).items():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:<20} max rel err {worst:.2e} (tol {tol:g})")
    print(f"{len(results)} checks over {trials} trials in {time.perf_counter() - start:.1f}s")
    return ok
