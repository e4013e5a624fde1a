"""Shared test oracles: central finite differences, random beam-search
instances, and exhaustive enumeration."""

from __future__ import annotations

import itertools

import numpy as np

from stylefit import autodiff as ad
from stylefit import generation as gen
from stylefit.autodiff import Tape, Tensor


def finite_difference_grads(fn, tensors: list[Tensor], h: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradient of scalar fn() w.r.t. each tensor's data.

    fn must read the tensors' current .data; this perturbs entries in
    place, so fn must not cache values between calls.
    """
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = fn()
            flat[i] = orig - h
            down = fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def check_gradients(
    build_loss,
    tensors: list[Tensor],
    rtol: float = 1e-4,
    atol: float = 1e-6,
    h: float = 1e-5,
):
    """Backprop build_loss() on a fresh tape and compare against central
    finite differences: |analytic - numeric| <= atol + rtol * |numeric|.
    build_loss returns a scalar Tensor.
    """
    ad.zero_grads(tensors)
    with Tape() as tape:
        loss = build_loss()
    tape.backward(loss)
    analytic = [None if t.grad is None else t.grad.copy() for t in tensors]

    def scalar_fn():
        return build_loss().item()

    numeric = finite_difference_grads(scalar_fn, tensors, h=h)
    for t, a, n in zip(tensors, analytic, numeric):
        if a is None:
            a = np.zeros_like(t.data)
        err = np.abs(a - n) - (atol + rtol * np.abs(n))
        assert err.max() <= 0.0, (
            f"gradient mismatch on shape {t.shape}: worst excess {err.max():.3e}, "
            f"analytic {a.reshape(-1)[np.argmax(err)]:.6g} vs "
            f"numeric {n.reshape(-1)[np.argmax(err)]:.6g}"
        )


def kl_quadrature(mu: np.ndarray, log_var: np.ndarray) -> float:
    """Independent oracle: numerically integrate sum_d E_q[ln q_d - ln p_d]
    for a diagonal Gaussian q against the unit Gaussian p."""
    from scipy import integrate

    total = 0.0
    for m, lv in zip(mu, log_var):
        var = np.exp(lv)
        sd = np.sqrt(var)

        def integrand(z):
            q = np.exp(-0.5 * (z - m) ** 2 / var) / np.sqrt(2 * np.pi * var)
            log_q = -0.5 * (z - m) ** 2 / var - 0.5 * np.log(2 * np.pi * var)
            log_p = -0.5 * z**2 - 0.5 * np.log(2 * np.pi)
            return q * (log_q - log_p)

        val, _ = integrate.quad(integrand, m - 12 * sd, m + 12 * sd,
                                epsabs=1e-12, epsrel=1e-12, limit=200)
        total += val
    return total


def brute_force_auroc(scores, labels) -> float:
    """Independent oracle: average over all (pos, neg) pairs, ties = 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def random_beam_instance(rng, n_slots: int, max_pool: int, dim: int = 12):
    """A store of random embeddings with one anchor and 2..max_pool
    candidates per remaining slot."""
    cats = [f"c{i}" for i in range(n_slots)]
    store = gen.EmbeddingStore(
        dim=dim, styles=["s"], categories=cats,
        style_vectors={"s": np.zeros(dim)}, item_categories={},
    )
    ids = {}
    for i, cat in enumerate(cats):
        n = 1 if i == 0 else int(rng.integers(2, max_pool + 1))
        ids[cat] = [f"{cat}-{j}" for j in range(n)]
    for ic in cats:
        for tc in cats:
            if ic != tc:
                store.add_slice("s", ic, tc, ids[ic], rng.standard_normal((len(ids[ic]), dim)))
    return store, cats, ids


def exhaustive_optimum(store, cats, ids, anchor):
    """Oracle: enumerate every combination, score by summed pairwise
    negative squared distance, break ties lexicographically."""
    best = None
    for combo in itertools.product(*[ids[c] for c in cats[1:]]):
        items = (anchor,) + combo
        score = 0.0
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                diff = store.vector("s", items[i], cats[j]) - store.vector(
                    "s", items[j], cats[i]
                )
                score -= float(diff @ diff)
        key = (-score, items)
        if best is None or key < best[0]:
            best = (key, items, score)
    return best[1], best[2]
