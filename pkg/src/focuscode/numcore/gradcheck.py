from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import NumericError


def grad_check(loss_fn: Callable, params: dict, eps: float = 1e-5,
               names=None, max_coords: int | None = None, seed: int = 0,
               oracle_dtype=None, value_fn: Callable | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(params) -> (loss, grads)``. The error for one coordinate is
    ``|a - n| / max(|a|, |n|, 1e-8)``. With ``max_coords`` only that many
    coordinates per array are probed, chosen by ``seed``.

    The analytic gradient always comes from ``params`` as given. With
    ``oracle_dtype`` (e.g. ``np.longdouble``) the finite differences are
    taken on a copy of the parameters in that wider type, which pushes the
    roundoff floor of the numeric estimate far below 64-bit resolution.
    ``value_fn(params) -> loss``, when given, is used for the probes so the
    backward pass is not rerun for every perturbation.
    """
    loss, grads = loss_fn(params)
    if not np.isfinite(loss):
        raise NumericError("loss is not finite at the base point")
    value = value_fn or (lambda p: loss_fn(p)[0])
    probe = params if oracle_dtype is None else {k: v.astype(oracle_dtype) for k, v in params.items()}
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in names or sorted(params):
        analytic = np.asarray(grads.get(name, np.zeros_like(params[name]))).reshape(-1)
        flat = probe[name].reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for k in coords:
            old = flat[k]
            flat[k] = old + eps
            lp = value(probe)
            flat[k] = old - eps
            lm = value(probe)
            flat[k] = old
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericError(f"non-finite loss while perturbing {name}[{k}]")
            num = float((lp - lm) / (2 * eps))
            a = float(analytic[k])
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, err)
    return worst
