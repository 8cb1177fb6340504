"""Empirical envelopes for the shifted N-function inequalities.

Each probe samples a family phi(t) = int_0^t (kappa + s)^(p-2) s ds on a
deterministic grid (or a seeded Monte-Carlo draw) and reports the smallest
and largest observed ratio between the two sides of an equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nfunction import (
    conjugate_kernel,
    conjugate_shifted,
    ddphi_kernel,
    dphi_kernel,
    ellipticity_bounds,
    ellipticity_ratio,
    hammer_ratios_kernel,
    phi_kernel,
    shift_numeric,
    young_constant,
)

P_GRID = (1.5, 2.0, 2.5, 3.0)
KAPPAS = (0.0, 1e-3, 1.0)


@dataclass(frozen=True)
class Envelope:
    name: str
    lo: float
    hi: float
    samples: int
    params: str = ""

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo > 0)

    @property
    def spread(self) -> float:
        return self.hi / self.lo

    def row(self) -> dict:
        return {"probe": self.name, "parameters": self.params, "lo": self.lo, "hi": self.hi}


def _env(name, vals, params=""):
    vals = np.asarray(vals, dtype=float).ravel()
    return Envelope(name, float(vals.min()), float(vals.max()), len(vals), params)


def _log_grid(lo, hi, n):
    return np.logspace(np.log10(lo), np.log10(hi), n)


# --- hammer ------------------------------------------------------------------------


def hammer_envelope(draws: int = 10_000, seed: int = 0, p_range=(1.5, 3.0), kappas=KAPPAS,
                    shape=(1, 2)) -> list[Envelope]:
    """Envelopes of the three hammer ratios over seeded random (p, kappa, P, Q)."""
    rng = np.random.default_rng(seed)
    p = rng.uniform(*p_range, size=draws)
    kappa = np.asarray(kappas)[rng.integers(0, len(kappas), size=draws)]

    def tensors():
        d = rng.standard_normal((draws,) + shape)
        d /= np.sqrt(np.sum(d * d, axis=(-2, -1)))[:, None, None]
        return d * 10.0 ** rng.uniform(-3, 3, size=draws)[:, None, None]

    P, Q = tensors(), tensors()
    out = [[], [], []]
    for k in np.unique(kappa):
        sel = kappa == k
        r = hammer_ratios_kernel(p[sel], float(k), P[sel], Q[sel])
        for i in range(3):
            out[i].append(r[i])
    params = f"p in [{p_range[0]}, {p_range[1]}], kappa in {list(kappas)}, draws={draws}, seed={seed}"
    return [_env(f"hammer_r{i + 1}", np.concatenate(out[i]), params) for i in range(3)]


# --- Young ---------------------------------------------------------------------------


def young_scan(s_max: float = 10.0, n: int = 21, ps=P_GRID, kappas=(0.0, 1e-3), shifts=(0.0, 1.0),
               deltas=(1.0, 0.5, 0.1, 0.01)) -> float:
    """min over the grid of (delta phi_a(s) + c_delta (phi_a)^*(t) - s t) / (1 + s t)."""
    s = np.linspace(0.0, s_max, n)
    worst = np.inf
    for p in ps:
        for k in kappas:
            for a in shifts:
                conj = conjugate_kernel(np.full(n, p), k, s, a)
                ph = phi_kernel(np.full(n, p), k, s, a)
                for d in deltas:
                    gap = d * ph[:, None] + young_constant(p, d) * conj[None, :] - np.outer(s, s)
                    worst = min(worst, float(np.min(gap / (1.0 + np.outer(s, s)))))
    return worst


# --- shift equivalences --------------------------------------------------------------


def shift_sim_envelope(ps=P_GRID, kappas=KAPPAS, n: int = 41) -> list[Envelope]:
    """phi_a(t) / (phi''(a) t^2) for t <= a and phi_a(t) / phi(t) for t >= a."""
    a = _log_grid(1e-4, 1e4, n)
    t = _log_grid(1e-4, 1e4, n)
    A, T = np.meshgrid(a, t, indexing="ij")
    small, large = [], []
    for p in ps:
        P = np.full_like(A, p)
        for k in kappas:
            pa = phi_kernel(P, k, T, A)
            lo = T <= A
            small.append((pa / (ddphi_kernel(P, k, A) * T**2))[lo])
            large.append((pa / phi_kernel(P, k, T))[~lo])
    params = f"p in {list(ps)}, kappa in {list(kappas)}, a,t in [1e-4, 1e4]"
    return [
        _env("shift_sim_small", np.concatenate(small), params),
        _env("shift_sim_large", np.concatenate(large), params),
    ]


def double_shift_envelope(ps=P_GRID, kappas=(0.0, 1e-3), n: int = 5) -> Envelope:
    """(phi_a)_b(t) / phi_{a+b}(t), with the outer shift taken by quadrature."""
    grid = _log_grid(1e-2, 1e2, n)
    ratios = []
    for p in ps:
        for k in kappas:
            for a in grid:
                def deriv(s, p=p, k=k, a=a):
                    return float(dphi_kernel(p, k, s, a))

                for b in grid:
                    for t in grid:
                        num = shift_numeric(deriv, b, t)
                        ratios.append(num / float(phi_kernel(p, k, t, a + b)))
    return _env("double_shift", ratios, f"p in {list(ps)}, kappa in {list(kappas)}, a,b,t in [1e-2, 1e2]")


def shift_change_constants(deltas=(1.0, 0.1, 0.01), draws: int = 2000, conj_draws: int = 200, seed: int = 0,
                           ps=P_GRID, kappa: float = 1e-3) -> dict:
    """Minimal empirical C_delta (at least 1) for both change-of-shift inequalities."""
    rng = np.random.default_rng(seed)
    out = {}

    def vecs(m):
        v = rng.standard_normal((m, 2))
        return v * (10.0 ** rng.uniform(-2, 2, size=m))[:, None]

    p = np.asarray(ps)[rng.integers(0, len(ps), size=draws)]
    a, b = vecs(draws), vecs(draws)
    t = 10.0 ** rng.uniform(-3, 3, size=draws)
    na, nb, nab = (np.linalg.norm(v, axis=1) for v in (a, b, a - b))
    pa_t = phi_kernel(p, kappa, t, na)
    pb_t = phi_kernel(p, kappa, t, nb)
    pa_ab = phi_kernel(p, kappa, nab, na)

    m = conj_draws
    ca = conjugate_kernel(p[:m], kappa, t[:m], na[:m])
    cb = conjugate_kernel(p[:m], kappa, t[:m], nb[:m])
    for d in deltas:
        prim = np.max((pa_t - d * pa_ab) / pb_t)
        dual = np.max((ca - d * pa_ab[:m]) / cb)
        out[d] = (max(1.0, float(prim)), max(1.0, float(dual)))
    return out


def shifted2_envelope(ps=P_GRID, kappas=(0.0, 1e-3), n: int = 9) -> list[Envelope]:
    """(phi_a)^*(t) / (phi^*)_{phi'(a)}(t) and the two lambda-scalings at a."""
    a_grid = _log_grid(1e-2, 1e2, n)
    lam = np.linspace(0.05, 1.0, n)
    conj, scal1, scal2 = [], [], []
    for p in ps:
        for k in kappas:
            for a in a_grid:
                da = float(dphi_kernel(p, k, a))
                for t in a_grid:
                    left = float(conjugate_kernel(p, k, t, a))
                    conj.append(left / conjugate_shifted(p, k, da, t))
                pa = float(phi_kernel(p, k, a))
                scal1.extend(phi_kernel(np.full(n, p), k, lam * a, a) / (lam**2 * pa))
                scal2.extend(conjugate_kernel(np.full(n, p), k, lam * da, a) / (lam**2 * pa))
    params = f"p in {list(ps)}, kappa in {list(kappas)}, a,t in [1e-2, 1e2]"
    return [
        _env("shifted2_conjugate", conj, params),
        _env("shifted2_lambda", scal1, params),
        _env("shifted2_lambda_conjugate", scal2, params),
    ]


def shifted_index_envelope(ps=P_GRID, kappas=(0.0, 1e-3), n: int = 9, a_max: float = 10.0) -> list[Envelope]:
    """Index bounds for lambda in (0, 1].

    ``shiftedindex`` divides phi_a(lam t) by max(lam^q, lam^2) phi(t) over a
    bounded a-range (the constant grows with a / t when q > 2).
    ``shiftedindex_self`` divides by max(lam^q, lam^2) phi_a(t), which is
    uniform in a; ``shiftedindex_conj`` is the conjugate analogue with q'.
    """
    lam = np.linspace(0.05, 1.0, n)
    a_grid = np.concatenate([[0.0], _log_grid(1e-2, a_max, n - 1)])
    t_grid = _log_grid(1e-2, 1e2, n)
    lit, own, conj = [], [], []
    for p in ps:
        q_conj = p / (p - 1)
        w = np.maximum(lam**p, lam**2)
        wc = np.maximum(lam**q_conj, lam**2)
        P = np.full(n, p)
        for k in kappas:
            for a in a_grid:
                for t in t_grid:
                    num = phi_kernel(P, k, lam * t, a)
                    lit.extend(num / (w * float(phi_kernel(p, k, t))))
                    own.extend(num / (w * float(phi_kernel(p, k, t, a))))
                    cnum = conjugate_kernel(P, k, lam * t, a)
                    conj.extend(cnum / (wc * float(conjugate_kernel(p, k, t, a))))
    params = f"p in {list(ps)}, kappa in {list(kappas)}, a in [0, {a_max}], t in [1e-2, 1e2]"
    return [
        _env("shiftedindex", lit, params),
        _env("shiftedindex_self", own, params),
        _env("shiftedindex_conj", conj, params),
    ]


def ellipticity_envelope(ps=(1.1, 1.5, 2.0, 3.0, 4.0, 6.0), kappas=KAPPAS, n: int = 81) -> list[dict]:
    """Observed ellipticity ratio range per p against the exact range."""
    t = _log_grid(1e-6, 1e6, n)
    rows = []
    for p in ps:
        r = np.concatenate([ellipticity_ratio(np.full(n, p), k, t) for k in kappas])
        lo, hi = ellipticity_bounds(p)
        rows.append({"p": p, "observed_lo": float(r.min()), "observed_hi": float(r.max()),
                     "exact_lo": lo, "exact_hi": hi})
    return rows


# --- p = 2 identities ------------------------------------------------------------------


def quadratic_identities() -> dict:
    """Deviations from the exact values at p = 2, kappa = 0.

    There phi(t) = t^2/2 is self-conjugate and shift invariant, so every
    ratio takes an exact value: hammer (1, 2, 1), shift_sim (1/2, 1),
    double shift 1, shifted2 ratios 1 and shiftedindex 1.
    """
    dev = {}
    h = hammer_envelope(draws=200, seed=1, p_range=(2.0, 2.0), kappas=(0.0,))
    dev["hammer"] = max(abs(h[0].lo - 1), abs(h[0].hi - 1), abs(h[1].lo - 2), abs(h[1].hi - 2),
                        abs(h[2].lo - 1), abs(h[2].hi - 1))
    s = shift_sim_envelope(ps=(2.0,), kappas=(0.0,), n=9)
    dev["shift_sim"] = max(abs(s[0].lo - 0.5), abs(s[0].hi - 0.5), abs(s[1].lo - 1), abs(s[1].hi - 1))
    d = double_shift_envelope(ps=(2.0,), kappas=(0.0,), n=3)
    dev["double_shift"] = max(abs(d.lo - 1), abs(d.hi - 1))
    s2 = shifted2_envelope(ps=(2.0,), kappas=(0.0,), n=5)
    dev["shifted2"] = max(max(abs(e.lo - 1), abs(e.hi - 1)) for e in s2)
    si = shifted_index_envelope(ps=(2.0,), kappas=(0.0,), n=5)
    dev["shiftedindex"] = max(max(abs(e.lo - 1), abs(e.hi - 1)) for e in si)
    return dev
