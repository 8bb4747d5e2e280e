"""Central finite-difference gradient checks for the autodiff engine.

The numerical gradient is the independent oracle used by the test suite
and the self-check command: it never touches the analytic backward path
of the operation under test.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


def numerical_gradient(f, arrays, step=1e-5):
    """Central-difference gradients of scalar ``f(*arrays)`` per input entry.

    ``f`` must be a pure function of the given float64 arrays returning a
    python float. Returns one gradient array per input.
    """
    grads = []
    for k, base in enumerate(arrays):
        g = np.zeros_like(base)
        flat = base.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_hi = f(*arrays)
            flat[i] = orig - step
            f_lo = f(*arrays)
            flat[i] = orig
            gflat[i] = (f_hi - f_lo) / (2.0 * step)
        grads.append(g)
    return grads


def check_gradients(build, arrays, step=1e-5, corrupt=False):
    """Compare analytic and numerical gradients of a scalar graph.

    ``build(*tensors) -> Tensor`` constructs the scalar loss from leaf
    tensors wrapping ``arrays`` (float64). Returns the worst relative
    error over all inputs, where the error of one input array is
    ``max|analytic - numerical| / (max|numerical| + tiny)``.

    ``corrupt`` perturbs the analytic gradient before comparison; the
    self-check command uses it to prove the check can fail.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    leaves = [ad.Tensor(a.copy()) for a in arrays]
    loss = build(*leaves)
    ad.backward(loss)
    analytic = [np.zeros_like(a) if t.grad is None else t.grad for a, t in zip(arrays, leaves)]
    if corrupt:
        analytic = [g + 1e-2 for g in analytic]

    def f(*xs):
        ts = [ad.constant(x.copy()) for x in xs]
        for t in ts:
            t.needs_grad = True
        return build(*ts).item()

    numerical = numerical_gradient(f, [a.copy() for a in arrays], step=step)
    worst = 0.0
    for ga, gn in zip(analytic, numerical):
        scale = np.abs(gn).max() + 1e-12
        worst = max(worst, float(np.abs(ga - gn).max() / scale))
    return worst


def check_model_gradients(params, loss_fn, rng, samples_per_tensor=3, step=1e-5):
    """Sampled finite-difference check of a parameterized scalar graph.

    ``params`` is a name -> Tensor mapping (float64); ``loss_fn()`` builds
    the scalar loss from the parameters' current values. A few entries of
    every tensor are perturbed in place. Returns
    ``max|analytic - numerical| / (max|numerical| + tiny)`` over all
    sampled entries, a gradient-scale relative error.
    """
    for p in params.values():
        p.zero_grad()
    loss = loss_fn()
    from . import autodiff as ad

    ad.backward(loss)
    pairs = []
    for name, p in params.items():
        flat = p.data.reshape(-1)
        gflat = (p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(-1)
        count = min(samples_per_tensor, flat.size)
        idx = rng.choice(flat.size, size=count, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            f_hi = loss_fn().item()
            flat[i] = orig - step
            f_lo = loss_fn().item()
            flat[i] = orig
            pairs.append((gflat[i], (f_hi - f_lo) / (2.0 * step)))
    analytic = np.array([a for a, _ in pairs])
    numerical = np.array([n for _, n in pairs])
    return float(np.abs(analytic - numerical).max() / (np.abs(numerical).max() + 1e-12))
