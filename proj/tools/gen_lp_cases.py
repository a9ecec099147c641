#!/usr/bin/env python3
"""Freeze random LP instances with reference results into a C++ include.

Each case is an equality-constrained LP with elementwise bounds, solved by
scipy's HiGHS backend. The emitted file (tests/data/lp_cases.inc) is checked
in, so the C++ tests do not depend on Python at build time. Re-run only when
the case mix needs to change:

    python3 tools/gen_lp_cases.py > tests/data/lp_cases.inc
"""

import sys

import numpy as np
from scipy.optimize import linprog

INF_SENTINEL = 1e30
SEED = 718281828

STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_UNBOUNDED = 2


def sample_bounds(rng, n):
    lower = np.empty(n)
    upper = np.empty(n)
    for j in range(n):
        kind = rng.random()
        if kind < 0.40:
            lower[j], upper[j] = 0.0, np.inf
        elif kind < 0.70:
            a = rng.uniform(-3, 1)
            lower[j], upper[j] = a, a + rng.uniform(0.5, 5)
        elif kind < 0.85:
            lower[j], upper[j] = -np.inf, np.inf
        elif kind < 0.925:
            lower[j], upper[j] = -np.inf, rng.uniform(-1, 3)
        else:
            lower[j], upper[j] = rng.uniform(-3, 1), np.inf
    return lower, upper


def sample_case(rng):
    n = rng.integers(2, 11)
    m = int(rng.integers(0, min(n, 6) + 1))
    c = rng.normal(size=n)
    lower, upper = sample_bounds(rng, n)
    A = rng.normal(size=(m, n))
    if m > 0 and rng.random() < 0.3:
        A[rng.random(size=A.shape) < 0.4] = 0.0
    if m > 0 and rng.random() < 0.7:
        # Bias toward feasible instances: take b from a bound-respecting point.
        x = np.empty(n)
        for j in range(n):
            lo = lower[j] if np.isfinite(lower[j]) else -4.0
            hi = upper[j] if np.isfinite(upper[j]) else lo + 6.0
            x[j] = rng.uniform(lo, hi)
        b = A @ x
    else:
        b = rng.normal(size=m)
    return c, A, b, lower, upper


def solve_reference(c, A, b, lower, upper):
    bounds = [
        (l if np.isfinite(l) else None, u if np.isfinite(u) else None)
        for l, u in zip(lower, upper)
    ]
    if A.shape[0] > 0:
        res = linprog(c, A_eq=A, b_eq=b, bounds=bounds, method="highs")
    else:
        res = linprog(c, bounds=bounds, method="highs")
    if res.status == 0:
        return STATUS_OPTIMAL, float(res.fun)
    if res.status == 2:
        return STATUS_INFEASIBLE, 0.0
    if res.status == 3:
        return STATUS_UNBOUNDED, 0.0
    return None, 0.0


def fmt_array(values):
    out = []
    for v in np.asarray(values, dtype=float).ravel():
        if np.isposinf(v):
            out.append("kInfSentinel")
        elif np.isneginf(v):
            out.append("-kInfSentinel")
        else:
            out.append(repr(float(v)))
    return ", ".join(out)


def main():
    rng = np.random.default_rng(SEED)
    cases = []
    counts = {STATUS_OPTIMAL: 0, STATUS_INFEASIBLE: 0, STATUS_UNBOUNDED: 0}
    want = {STATUS_OPTIMAL: 30, STATUS_INFEASIBLE: 10, STATUS_UNBOUNDED: 6}
    attempts = 0
    while any(counts[k] < want[k] for k in want) and attempts < 20000:
        attempts += 1
        c, A, b, lower, upper = sample_case(rng)
        status, objective = solve_reference(c, A, b, lower, upper)
        if status is None or counts[status] >= want[status]:
            continue
        counts[status] += 1
        cases.append((c, A, b, lower, upper, status, objective))
    if any(counts[k] < want[k] for k in want):
        raise SystemExit(f"did not reach the target case mix: {counts}")

    w = sys.stdout.write
    w("// Generated by tools/gen_lp_cases.py (seed %d). Do not edit by hand.\n" % SEED)
    w("// Reference statuses and objectives come from scipy/HiGHS.\n")
    w("inline std::vector<FrozenLpCase> frozen_lp_cases() {\n")
    w("  constexpr double kInfSentinel = 1e30;\n")
    w("  std::vector<FrozenLpCase> cases;\n")
    for c, A, b, lower, upper, status, objective in cases:
        m, n = A.shape
        w("  cases.push_back(FrozenLpCase{\n")
        w(f"      {m}, {n},\n")
        w(f"      {{{fmt_array(c)}}},\n")
        w(f"      {{{fmt_array(A)}}},\n")
        w(f"      {{{fmt_array(b)}}},\n")
        w(f"      {{{fmt_array(lower)}}},\n")
        w(f"      {{{fmt_array(upper)}}},\n")
        w(f"      {status}, {objective!r}}});\n")
    w("  return cases;\n")
    w("}\n")


if __name__ == "__main__":
    main()
