"""Exact results for birth-death chains, computed by dense linear algebra.

Everything here is independent of the samplers: absorption probabilities come
from the harmonic equations, passage times from ``(I - Q) m = 1``, the basin
flux from the stationary law of an augmented (site, armed) chain.
"""
from __future__ import annotations

import numpy as np

from .models.walk import BirthDeathChain


def gamblers_ruin(p_up: float, p_down: float, j: int, k: int, m: int) -> float:
    """Probability that a homogeneous walk from ``k`` hits ``m`` before ``j`` (``j < k < m``)."""
    if not j <= k <= m:
        raise ValueError("need j <= k <= m")
    r = p_down / p_up
    if np.isclose(r, 1.0):
        return (k - j) / (m - j)
    return (1.0 - r ** (k - j)) / (1.0 - r ** (m - j))


def absorption_probability(chain: BirthDeathChain, start: int, lower: float, upper: float) -> float:
    """P(reach ``lam >= upper`` before ``lam < lower``) from site ``start``."""
    if start >= upper:
        return 1.0
    if start < lower:
        return 0.0
    sites = chain.sites
    P = chain.transition_matrix()
    inside = (sites >= lower) & (sites < upper)
    hit = sites >= upper
    A = np.eye(inside.sum()) - P[np.ix_(inside, inside)]
    b = P[np.ix_(inside, hit)].sum(axis=1)
    h = np.linalg.solve(A, b)
    return float(h[np.nonzero(sites[inside] == start)[0][0]])


def mean_first_passage_time(chain: BirthDeathChain, start: int, lambda_B: float) -> float:
    """Mean number of steps from ``start`` until ``lam >= lambda_B``."""
    sites = chain.sites
    P = chain.transition_matrix()
    inside = sites < lambda_B
    Q = P[np.ix_(inside, inside)]
    m = np.linalg.solve(np.eye(inside.sum()) - Q, np.ones(inside.sum()))
    return float(m[np.nonzero(sites[inside] == start)[0][0]])


def exact_rate(chain: BirthDeathChain, lambda_B: float, start: int | None = None) -> float:
    """A -> B rate of the process restarted at ``start`` whenever it reaches B.

    By renewal this is the inverse mean first passage time, per unit step.
    """
    start = chain.start if start is None else start
    return 1.0 / mean_first_passage_time(chain, start, lambda_B)


def exact_basin_flux(chain: BirthDeathChain, lambda_0: float, lambda_A: float, lambda_B: float,
                     start: int | None = None) -> float:
    """Long-run rate of effective crossings of ``lambda_0`` in the restarted process.

    The chain is augmented with an ``armed`` bit (set on entering A, cleared on a
    counted crossing). Reaching B teleports to ``start``. The flux is the
    stationary probability current into ``lambda_0`` from armed states.
    """
    start = chain.start if start is None else start
    sites = chain.sites
    n = len(sites)
    P = chain.transition_matrix()

    def idx(i, armed):
        return 2 * i + int(armed)

    start_i = int(np.nonzero(sites == start)[0][0])
    T = np.zeros((2 * n, 2 * n))
    current = np.zeros((2 * n, 2 * n))
    for i in range(n):
        for armed in (False, True):
            for j in np.nonzero(P[i])[0]:
                lam = sites[j]
                if lam >= lambda_B:
                    dest = idx(start_i, sites[start_i] < lambda_A)
                    # a jump that lands in B also crosses lambda_0 first
                    if armed and sites[i] < lambda_0 <= lam:
                        current[idx(i, armed), dest] += P[i, j]
                    T[idx(i, armed), dest] += P[i, j]
                    continue
                now_armed = armed
                counted = False
                if armed and sites[i] < lambda_0 <= lam:
                    counted = True
                    now_armed = False
                if lam < lambda_A:
                    now_armed = True
                T[idx(i, armed), idx(j, now_armed)] += P[i, j]
                if counted:
                    current[idx(i, armed), idx(j, now_armed)] += P[i, j]
    reach = T.sum(axis=0) > 0
    reach |= np.eye(2 * n, dtype=bool)[idx(start_i, sites[start_i] < lambda_A)]
    keep = np.nonzero(reach)[0]
    Tk = T[np.ix_(keep, keep)]
    # stationary distribution: left null vector of (Tk - I) with normalization
    A = np.vstack([Tk.T - np.eye(len(keep)), np.ones(len(keep))])
    b = np.zeros(len(keep) + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    flux = float(pi @ current[np.ix_(keep, keep)].sum(axis=1))
    return flux / chain.time_per_step


def exact_interface_probabilities(chain: BirthDeathChain, interfaces, lambda_A: float) -> np.ndarray:
    """Exact P(lambda_{i+1} | lambda_i) for nearest-neighbour moves (crossings land on the level)."""
    lam = [int(round(x)) for x in interfaces]
    return np.array([absorption_probability(chain, lam[i], lambda_A, lam[i + 1])
                     for i in range(len(lam) - 1)])
