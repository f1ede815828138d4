"""Central finite-difference checking of ``model_backward``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model as M


@dataclass
class GradCheckReport:
    h: float
    errors: dict = field(default_factory=dict)  # tensor name -> relative errors, flat
    analytic: dict = field(default_factory=dict)
    numeric: dict = field(default_factory=dict)
    kinked: dict = field(default_factory=dict)  # tensor name -> bool mask: activation pattern changed within +-h

    @property
    def max_error(self) -> float:
        return max(float(e.max()) for e in self.errors.values() if e.size)

    def failures(self, tol: float) -> list[tuple[str, int, float, float, float, bool]]:
        out = []
        for name, err in self.errors.items():
            for i in np.flatnonzero(err >= tol):
                out.append((name, int(i), float(err[i]), float(self.analytic[name][i]),
                            float(self.numeric[name][i]), bool(self.kinked[name][i])))
        return out

    @property
    def n_checked(self) -> int:
        return sum(e.size for e in self.errors.values())


def relative_error(a, b, floor: float = 1e-8):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def _pattern(cache: M.ForwardCache):
    return [m.copy() for m in cache.relu_masks] + [a.copy() for a in cache.pool_args] + [cache.hidden_mask.copy()]


def _same_pattern(a, b) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def check_gradients(params: M.ModelParams, images, labels, h: float = 1e-6, dropout_seed: int = 0,
                    names=None) -> GradCheckReport:
    """Compare analytic gradients of the summed loss with central differences.

    Dropout is active with a mask re-drawn from ``dropout_seed`` on every
    evaluation, so all evaluations see the same mask. Every scalar of every
    tensor (or of ``names``) is perturbed in place and restored.
    """
    x = np.asarray(images, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    kind = params.loss_kind

    def run():
        prob, cache = M.model_forward(x, params, "train", np.random.default_rng(dropout_seed))
        return float(M.loss(prob, y, kind)[0].sum()), cache

    _, base_cache = run()
    _, dprob = M.loss(base_cache.prob, y, kind)
    grads = M.model_backward(base_cache, params, dprob)
    base_pattern = _pattern(base_cache)

    report = GradCheckReport(h)
    for (name, arr), (_, garr) in zip(params.tensors(), grads.tensors()):
        if names is not None and name not in names:
            continue
        flat = arr.reshape(-1)
        numeric = np.empty(flat.size)
        kinked = np.zeros(flat.size, dtype=bool)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp, cp = run()
            flat[i] = old - h
            fm, cm = run()
            flat[i] = old
            numeric[i] = (fp - fm) / (2 * h)
            kinked[i] = not (_same_pattern(_pattern(cp), base_pattern) and _same_pattern(_pattern(cm), base_pattern))
        analytic = garr.reshape(-1).copy()
        report.analytic[name] = analytic
        report.numeric[name] = numeric
        report.errors[name] = relative_error(analytic, numeric)
        report.kinked[name] = kinked
    return report
