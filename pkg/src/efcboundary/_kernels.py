"""Compiled inner loops: alias-table construction and the path simulator.

Coalescence events are drawn by thinning.  From n blocks, a Poisson stream of
merge parameters x with intensity ``min(1, C(n,2) x**2) x**-2 Lambda_env(dx)``
is proposed, where ``Lambda_env >= Lambda`` is the closed-form envelope of the
density part.  A proposal at x is kept with probability
``q_n(x) / min(1, C(n,2) x**2) * f(x) / f_env(x)`` where
``q_n(x) = P(Bin(n, x) >= 2)``, and the merger size is then ``Bin(n, x)``
conditioned on being at least 2.  Kept events have exactly the intensity
``C(n,k) lambda_{n,k}``, so the scheme is exact and needs no rate row.
"""

import math

import numpy as np
from numba import njit

# terminal codes shared with simulator.py
CENSORED = 0
EXPLODED = 1
HIT_FLOOR = 2
SIGMA_P = 3
RETURNED = 4
ABSORBED = 5
BUDGET = 6

DENS_NONE = 0
DENS_POWER = 1
DENS_LOGPOWER = 2
DENS_TABLE = 3

KIND_COAL = 0
KIND_FRAG = 1


@njit(cache=True)
def build_alias(p):
    n = p.shape[0]
    prob = np.zeros(n)
    alias = np.arange(n)
    scaled = p * (n / p.sum())
    small = np.empty(n, np.int64)
    large = np.empty(n, np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        nl -= 1
        g = large[nl]
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            small[ns] = g
            ns += 1
        else:
            large[nl] = g
            nl += 1
    for j in range(nl):
        prob[large[j]] = 1.0
    for j in range(ns):
        prob[small[j]] = 1.0
    return prob, alias


@njit(cache=True)
def q_at_least_two(n, x):
    """P(Bin(n, x) >= 2)."""
    if x >= 1.0:
        return 1.0
    if n * x < 1e-3:
        c2 = 0.5 * n * (n - 1.0)
        c3 = c2 * (n - 2.0) / 3.0
        c4 = c3 * (n - 3.0) / 4.0
        c5 = c4 * (n - 4.0) / 5.0
        return x * x * (c2 - x * (2.0 * c3 - x * (3.0 * c4 - x * 4.0 * c5)))
    m = (n - 1.0) * math.log1p(-x) + math.log1p((n - 1.0) * x)
    return -math.expm1(m)


@njit(cache=True)
def conditioned_binomial(rng, n, x):
    """Bin(n, x) conditioned on >= 2."""
    if n * x >= 3.0:
        while True:
            k = rng.binomial(n, x)
            if k >= 2:
                return k
    # sequential inversion from k = 2
    q = q_at_least_two(n, x)
    u = rng.random() * q
    lp = (math.lgamma(n + 1.0) - math.lgamma(n - 1.0) - math.log(2.0)
          + 2.0 * math.log(x) + (n - 2.0) * math.log1p(-x))
    pk = math.exp(lp)
    r = x / (1.0 - x)
    k = 2
    acc = pk
    while u > acc and k < n:
        pk *= (n - k) / (k + 1.0) * r
        k += 1
        acc += pk
    return k


@njit(cache=True)
def density_value(kind, c, beta, gamma, tab_x, tab_y, x):
    if kind == DENS_POWER:
        return c * x ** (-beta)
    if kind == DENS_LOGPOWER:
        return c * (-math.log(x)) ** gamma
    if kind == DENS_TABLE:
        return np.interp(x, tab_x, tab_y)
    return 0.0


@njit(cache=True)
def _grow(buf, size):
    out = np.empty(max(2 * buf.shape[0], size), buf.dtype)
    out[: buf.shape[0]] = buf
    return out


@njit(cache=True)
def run_path_kernel(rng, n0, horizon, n_max, floor, floor_mode, return_level, p_stop,
                    max_jumps, kingman, atoms_x, atoms_w, dens_kind, dens_c, dens_beta,
                    dens_gamma, tab_x, tab_y, env_c, env_beta, frag_mass, alias_prob,
                    alias_idx, tail_index, record):
    """Simulate one path.

    floor_mode: 0 ignore, 1 stop at floor, 2 record first floor time and go on.
    tail_index is the jump value standing for ">= ceiling".
    return_level > 0: after the floor was hit, the first visit to a state
    >= return_level is recorded and stops the path.
    """
    n = np.int64(n0)
    t = 0.0
    jumps = np.int64(0)
    n_coal = np.int64(0)
    n_frag = np.int64(0)
    n_rej = np.int64(0)
    max_state = n
    min_state = n
    via_tail = False
    floor_time = -1.0
    return_time = -1.0
    code = CENSORED
    cap = 1024 if record else 1
    p_t = np.empty(cap)
    p_from = np.empty(cap, np.int64)
    p_to = np.empty(cap, np.int64)
    p_kind = np.empty(cap, np.int64)
    p_k = np.empty(cap, np.int64)
    n_rec = 0
    n_atoms = atoms_x.shape[0]
    atom_rates = np.zeros(n_atoms)
    one_m = 1.0 - env_beta
    one_p = 1.0 + env_beta
    while True:
        if jumps >= max_jumps:
            code = BUDGET
            break
        # proposal rates from state n
        rk = 0.0
        ra = 0.0
        rd = 0.0
        p1 = 0.0
        cpow = 0.0
        if n >= 2:
            C = 0.5 * n * (n - 1.0)
            rk = kingman * C
            for i in range(n_atoms):
                x = atoms_x[i]
                e = min(1.0, C * x * x)
                atom_rates[i] = atoms_w[i] / (x * x) * e
                ra += atom_rates[i]
            if dens_kind != DENS_NONE and env_c > 0.0:
                cpow = C ** (0.5 * one_p)
                p1 = env_c * cpow / one_m
                rd = p1 + env_c * (cpow - 1.0) / one_p
        rf = n * frag_mass
        total = rk + ra + rd + rf
        if total <= 0.0:
            code = ABSORBED
            t = horizon if horizon < math.inf else t
            break
        t += -math.log(1.0 - rng.random()) / total
        if t >= horizon:
            t = horizon
            code = CENSORED
            break
        jumps += 1
        u = rng.random() * total
        new_n = n
        kind = -1
        ksize = 0
        if u < rf:
            # fragmentation: alias draw
            m = alias_prob.shape[0]
            v = rng.random() * m
            i = min(int(v), m - 1)
            if v - i >= alias_prob[i]:
                i = alias_idx[i]
            ksize = i + 1
            kind = KIND_FRAG
            n_frag += 1
            new_n = n + ksize
            if ksize == tail_index:
                via_tail = True
        else:
            u -= rf
            C = 0.5 * n * (n - 1.0)
            if u < rk:
                ksize = 2
            elif u < rk + ra:
                u -= rk
                j = 0
                while j < n_atoms - 1 and u >= atom_rates[j]:
                    u -= atom_rates[j]
                    j += 1
                x = atoms_x[j]
                e = min(1.0, C * x * x)
                if rng.random() * e < q_at_least_two(n, x):
                    ksize = conditioned_binomial(rng, n, x)
            else:
                xstar = 1.0 / math.sqrt(C)
                if rng.random() * rd < p1:
                    x = xstar * rng.random() ** (1.0 / one_m)
                else:
                    w = 1.0 + rng.random() * (cpow - 1.0)
                    x = w ** (-1.0 / one_p)
                if x > 0.0 and x < 1.0:
                    e = min(1.0, C * x * x)
                    acc = q_at_least_two(n, x) / e
                    if dens_kind != DENS_POWER or env_beta != dens_beta or env_c != dens_c:
                        fe = env_c * x ** (-env_beta)
                        acc *= density_value(dens_kind, dens_c, dens_beta, dens_gamma,
                                             tab_x, tab_y, x) / fe
                    if rng.random() < acc:
                        ksize = conditioned_binomial(rng, n, x)
            if ksize >= 2:
                kind = KIND_COAL
                n_coal += 1
                new_n = n - ksize + 1
            else:
                n_rej += 1
        if kind < 0:
            continue
        if record:
            if n_rec >= p_t.shape[0]:
                p_t = _grow(p_t, n_rec + 1)
                p_from = _grow(p_from, n_rec + 1)
                p_to = _grow(p_to, n_rec + 1)
                p_kind = _grow(p_kind, n_rec + 1)
                p_k = _grow(p_k, n_rec + 1)
            p_t[n_rec] = t
            p_from[n_rec] = n
            p_to[n_rec] = new_n
            p_kind[n_rec] = kind
            p_k[n_rec] = ksize
            n_rec += 1
        if kind == KIND_COAL and p_stop > 0.0 and ksize > math.floor(n * p_stop):
            n = new_n
            code = SIGMA_P
            break
        n = new_n
        if n > max_state:
            max_state = n
        if n < min_state:
            min_state = n
        if kind == KIND_FRAG and (via_tail or n >= n_max):
            code = EXPLODED
            break
        if floor_time < 0.0 and n <= floor:
            if floor_mode == 1:
                floor_time = t
                code = HIT_FLOOR
                break
            if floor_mode == 2:
                floor_time = t
        if return_level > 0 and floor_time >= 0.0 and n >= return_level:
            return_time = t
            code = RETURNED
            break
    return (code, t, jumps, n_coal, n_frag, n_rej, max_state, min_state, n, via_tail,
            floor_time, return_time, p_t[:n_rec], p_from[:n_rec], p_to[:n_rec],
            p_kind[:n_rec], p_k[:n_rec])
