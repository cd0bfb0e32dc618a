"""Exact transportation simplex (dense bipartite min-cost flow).

Network-simplex specialization for the transportation polytope: spanning
tree basis, dual (u, v) recomputation by tree traversal, block pricing with
a deterministic cursor, and a Bland-rule fallback that guarantees
termination under degeneracy. Costs are arbitrary nonnegative floats; the
solution is an exact vertex optimum (floating-point arithmetic aside).

Cross-checked in the tests against scipy's LP-based exact solver.
"""

import numpy as np

from ._accel import HAVE_NUMBA

if HAVE_NUMBA:
    from numba import njit
else:  # pragma: no cover
    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap


class TransportError(RuntimeError):
    pass


@njit(cache=True)
def _solve_simplex(a, b, C, max_pivots):
    n = a.size
    m = b.size
    N = n + m
    narcs = N - 1
    # basis arcs and flows (northwest-corner start, degenerate zeros allowed)
    brow = np.empty(narcs, dtype=np.int64)
    bcol = np.empty(narcs, dtype=np.int64)
    bflow = np.empty(narcs)
    ra = a.copy()
    rb = b.copy()
    i = 0
    j = 0
    k = 0
    while k < narcs:
        brow[k] = i
        bcol[k] = j
        f = ra[i] if ra[i] <= rb[j] else rb[j]
        if i == n - 1 and j == m - 1:
            f = ra[i]
        bflow[k] = f
        ra[i] -= f
        rb[j] -= f
        if i < n - 1 and (ra[i] <= 0.0 or j == m - 1):
            i += 1
        else:
            j += 1
        k += 1

    u = np.empty(n)
    v = np.empty(m)
    # workspaces for tree traversal
    adj_head = np.empty(N, dtype=np.int64)
    adj_next = np.empty(2 * narcs, dtype=np.int64)
    adj_arc = np.empty(2 * narcs, dtype=np.int64)
    stack = np.empty(N, dtype=np.int64)
    visited = np.empty(N, dtype=np.uint8)
    parent_node = np.empty(N, dtype=np.int64)
    parent_arc = np.empty(N, dtype=np.int64)

    block = 128 + int(np.sqrt(n * m))
    cursor = 0
    total = n * m
    bland_after = 30 * N
    # tolerance scaled to the cost magnitude
    cmax = 0.0
    for p in range(n):
        for q in range(m):
            if C[p, q] > cmax:
                cmax = C[p, q]
    tol = 1e-13 * max(cmax, 1.0)

    for pivot in range(max_pivots):
        # ---- rebuild adjacency of the basis tree
        for p in range(N):
            adj_head[p] = -1
        for arc in range(narcs):
            p = brow[arc]
            q = n + bcol[arc]
            adj_next[2 * arc] = adj_head[p]
            adj_arc[2 * arc] = arc
            adj_head[p] = 2 * arc
            adj_next[2 * arc + 1] = adj_head[q]
            adj_arc[2 * arc + 1] = arc
            adj_head[q] = 2 * arc + 1

        # ---- duals by traversal from node 0 (u[0] = 0)
        for p in range(N):
            visited[p] = 0
        top = 0
        stack[top] = 0
        visited[0] = 1
        u[0] = 0.0
        while top >= 0:
            node = stack[top]
            top -= 1
            e = adj_head[node]
            while e != -1:
                arc = adj_arc[e]
                p = brow[arc]
                q = n + bcol[arc]
                other = q if node == p else p
                if visited[other] == 0:
                    visited[other] = 1
                    if other >= n:
                        v[other - n] = C[brow[arc], bcol[arc]] - u[brow[arc]]
                    else:
                        u[other] = C[brow[arc], bcol[arc]] - v[bcol[arc]]
                    top += 1
                    stack[top] = other
                e = adj_next[e]

        # ---- entering arc: block pricing, Bland fallback for anti-cycling
        best = -tol
        ei = -1
        ej = -1
        if pivot < bland_after:
            scanned = 0
            while scanned < total:
                nscan = block if block < total - scanned else total - scanned
                for step in range(nscan):
                    flat = cursor + step
                    if flat >= total:
                        flat -= total
                    p = flat // m
                    q = flat - p * m
                    r = C[p, q] - u[p] - v[q]
                    if r < best:
                        best = r
                        ei = p
                        ej = q
                scanned += nscan
                cursor += nscan
                if cursor >= total:
                    cursor -= total
                if ei >= 0:
                    break
        else:
            for flat in range(total):
                p = flat // m
                q = flat - p * m
                if C[p, q] - u[p] - v[q] < -tol:
                    ei = p
                    ej = q
                    break
        if ei < 0:
            cost = 0.0
            for arc in range(narcs):
                cost += bflow[arc] * C[brow[arc], bcol[arc]]
            return cost, 0, pivot

        # ---- cycle: tree path from source ei to sink ej
        for p in range(N):
            visited[p] = 0
            parent_node[p] = -1
            parent_arc[p] = -1
        top = 0
        stack[top] = ei
        visited[ei] = 1
        target = n + ej
        while top >= 0:
            node = stack[top]
            top -= 1
            if node == target:
                break
            e = adj_head[node]
            while e != -1:
                arc = adj_arc[e]
                p = brow[arc]
                q = n + bcol[arc]
                other = q if node == p else p
                if visited[other] == 0:
                    visited[other] = 1
                    parent_node[other] = node
                    parent_arc[other] = arc
                    top += 1
                    stack[top] = other
                e = adj_next[e]
        # walk back from target to ei; arcs alternate -,+ starting with -
        # (the entering arc carries +t into sink ej)
        tmin = 1e300
        leave = -1
        node = target
        sign_minus = True
        while node != ei:
            arc = parent_arc[node]
            if sign_minus:
                if bflow[arc] < tmin:
                    tmin = bflow[arc]
                    leave = arc
            sign_minus = not sign_minus
            node = parent_node[node]
        if leave < 0:
            return -1.0, 2, pivot

        # ---- pivot flows around the cycle
        node = target
        sign_minus = True
        while node != ei:
            arc = parent_arc[node]
            if sign_minus:
                bflow[arc] -= tmin
            else:
                bflow[arc] += tmin
            sign_minus = not sign_minus
            node = parent_node[node]
        brow[leave] = ei
        bcol[leave] = ej
        bflow[leave] = tmin

    return -1.0, 1, max_pivots


def transport_cost(a, b, C, max_pivots=None):
    """Exact optimal transport cost between histograms a, b with cost C."""
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    C = np.ascontiguousarray(C, dtype=float)
    if abs(a.sum() - b.sum()) > 1e-9 * max(a.sum(), 1e-300):
        raise TransportError("marginals must carry equal mass")
    if a.size == 1:
        return float((C[0] * b).sum())
    if b.size == 1:
        return float((C[:, 0] * a).sum())
    if max_pivots is None:
        max_pivots = 200 * (a.size + b.size) + 20000
    cost, status, pivots = _solve_simplex(a, b, C, max_pivots)
    if status == 1:
        raise TransportError(f"simplex did not terminate in {pivots} pivots")
    if status == 2:
        raise TransportError("degenerate cycle without leaving arc (bug)")
    return float(cost)
