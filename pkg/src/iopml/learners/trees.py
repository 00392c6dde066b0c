"""Regression trees on categorical circumstances.

Rows sharing the same circumstance pattern are indistinguishable to a tree,
so fitting works on per-pattern sufficient statistics (weight, weighted sum
and weighted sum of squares of the target, row count). Categorical splits
order the categories present in a node by their mean target and scan the
ordered prefixes, which is the optimal binary partition for squared loss.

Each node stores its left-going category set as a bitmask; categories not
seen in the node (and labels unseen at training time) follow the heavier
child.
"""

import numpy as np
from numba import njit

MAX_CATEGORIES = 63


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def _mix(z):
    """splitmix64 finaliser: a bijective scramble of 64 bits."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _next(state):
    """splitmix64 step; ``state`` is a one-element uint64 array."""
    state[0] += _GOLDEN
    return _mix(state[0])


@njit(cache=True)
def _randint(state, n):
    """Uniform integer in [0, n)."""
    u = (_next(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    k = np.int64(u * n)
    return k if k < n else n - 1


@njit(cache=True)
def _tree_state(master, t):
    """Per-tree generator state hashed from the master seed and the tree counter.

    Hashing (rather than offsetting) keeps the streams of consecutive trees
    from being shifted copies of each other.
    """
    state = np.zeros(1, dtype=np.uint64)
    state[0] = _mix(_mix(np.uint64(master) + _GOLDEN) ^ (np.uint64(t) * _MIX2 + _MIX1))
    return state


@njit(cache=True)
def _build_tree(Xu, ncat, sw, s1, s2, cnt, max_depth, min_leaf, mtry, rng):
    """Grow one tree on pattern statistics.

    Returns node arrays (feature, left, right, value, mask, default_left);
    leaves have feature -1. ``rng`` is the splitmix64 state used for
    feature sampling.
    """
    G, M = Xu.shape
    active = np.empty(G, dtype=np.int64)
    na = 0
    for g in range(G):
        if sw[g] > 0:
            active[na] = g
            na += 1
    cap = 2 * max(na, 1) + 1
    feat = np.full(cap, -1, dtype=np.int64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    mask = np.zeros(cap, dtype=np.int64)
    dleft = np.zeros(cap, dtype=np.int8)

    # stack of (start, end, depth, node)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    sp = 0
    st_start[0] = 0
    st_end[0] = na
    st_depth[0] = 0
    st_node[0] = 0
    sp = 1
    n_nodes = 1

    max_c = 1
    for f in range(M):
        if ncat[f] > max_c:
            max_c = ncat[f]
    cw = np.zeros(max_c)
    cs = np.zeros(max_c)
    cc = np.zeros(max_c)
    feats = np.arange(M)

    while sp > 0:
        sp -= 1
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        node = st_node[sp]

        W = 0.0
        S = 0.0
        S2 = 0.0
        C = 0.0
        for k in range(start, end):
            g = active[k]
            W += sw[g]
            S += s1[g]
            S2 += s2[g]
            C += cnt[g]
        value[node] = S / W if W > 0 else 0.0
        sse = S2 - S * S / W if W > 0 else 0.0
        if end - start < 2 or depth >= max_depth or C < 2 * min_leaf:
            continue
        if sse <= 1e-12 * max(abs(S2), 1e-300):
            continue

        # random feature order, Fisher-Yates
        for i in range(M - 1, 0, -1):
            j = _randint(rng, i + 1)
            tmp = feats[i]
            feats[i] = feats[j]
            feats[j] = tmp

        best_gain = -np.inf
        best_f = -1
        best_mask = 0
        best_dleft = 0
        visited = 0
        parent_term = S * S / W
        for fi in range(M):
            if visited >= mtry and best_f >= 0:
                break
            f = feats[fi]
            nc = ncat[f]
            for c in range(nc):
                cw[c] = 0.0
                cs[c] = 0.0
                cc[c] = 0.0
            for k in range(start, end):
                g = active[k]
                c = Xu[g, f]
                cw[c] += sw[g]
                cs[c] += s1[g]
                cc[c] += cnt[g]
            present = 0
            for c in range(nc):
                if cw[c] > 0:
                    present += 1
            if present < 2:
                continue
            visited += 1
            cats = np.empty(present, dtype=np.int64)
            means = np.empty(present)
            p = 0
            for c in range(nc):
                if cw[c] > 0:
                    cats[p] = c
                    means[p] = cs[c] / cw[c]
                    p += 1
            order = np.argsort(means, kind="mergesort")
            WL = 0.0
            SL = 0.0
            CL = 0.0
            m = 0
            for q in range(present - 1):
                c = cats[order[q]]
                WL += cw[c]
                SL += cs[c]
                CL += cc[c]
                m |= np.int64(1) << c
                if CL < min_leaf or C - CL < min_leaf:
                    continue
                WR = W - WL
                SR = S - SL
                gain = SL * SL / WL + SR * SR / WR - parent_term
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_mask = m
                    best_dleft = 1 if WL >= WR else 0
        if best_f < 0:
            continue

        # absent categories follow the heavier side
        if best_dleft == 1:
            for c in range(ncat[best_f]):
                if not ((best_mask >> c) & 1):
                    present_c = False
                    for k in range(start, end):
                        if Xu[active[k], best_f] == c:
                            present_c = True
                            break
                    if not present_c:
                        best_mask |= np.int64(1) << c

        # in-place partition: left groups first
        i = start
        j = end - 1
        while i <= j:
            if (best_mask >> Xu[active[i], best_f]) & 1:
                i += 1
            else:
                tmp = active[i]
                active[i] = active[j]
                active[j] = tmp
                j -= 1
        mid = i
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        feat[node] = best_f
        left[node] = lnode
        right[node] = rnode
        mask[node] = best_mask
        dleft[node] = best_dleft
        st_start[sp] = start
        st_end[sp] = mid
        st_depth[sp] = depth + 1
        st_node[sp] = lnode
        sp += 1
        st_start[sp] = mid
        st_end[sp] = end
        st_depth[sp] = depth + 1
        st_node[sp] = rnode
        sp += 1

    return (
        feat[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        mask[:n_nodes],
        dleft[:n_nodes],
    )


@njit(cache=True)
def _predict_patterns(Xu, ncat, roots, feat, left, right, value, mask, dleft):
    """Sum over trees of leaf values for every pattern row."""
    G = Xu.shape[0]
    out = np.zeros(G)
    for g in range(G):
        acc = 0.0
        for t in range(roots.shape[0]):
            node = roots[t]
            while feat[node] >= 0:
                f = feat[node]
                c = Xu[g, f]
                if c < 0 or c >= ncat[f]:
                    go_left = dleft[node] == 1
                else:
                    go_left = ((mask[node] >> c) & 1) == 1
                node = left[node] if go_left else right[node]
            acc += value[node]
        out[g] = acc
    return out


@njit(cache=True)
def _grow(a, cap):
    out = np.empty(cap, dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


@njit(cache=True)
def _append(store, used, tree):
    """Copy one tree into the concatenated node arrays, doubling capacity as needed."""
    feat, left, right, value, mask, dleft = tree
    sf, sl, sr, sv, sm, sd = store
    k = feat.shape[0]
    if used + k > sf.shape[0]:
        cap = max(2 * sf.shape[0], used + k)
        sf, sl, sr = _grow(sf, cap), _grow(sl, cap), _grow(sr, cap)
        sv, sm, sd = _grow(sv, cap), _grow(sm, cap), _grow(sd, cap)
    for i in range(k):
        sf[used + i] = feat[i]
        sl[used + i] = left[i] + used if left[i] >= 0 else -1
        sr[used + i] = right[i] + used if right[i] >= 0 else -1
        sv[used + i] = value[i]
        sm[used + i] = mask[i]
        sd[used + i] = dleft[i]
    return (sf, sl, sr, sv, sm, sd), used + k


@njit(cache=True)
def _new_store(cap):
    return (
        np.empty(cap, dtype=np.int64),
        np.empty(cap, dtype=np.int64),
        np.empty(cap, dtype=np.int64),
        np.empty(cap),
        np.empty(cap, dtype=np.int64),
        np.empty(cap, dtype=np.int8),
    )


@njit(cache=True)
def _forest_fit(Xu, inv, y, w, ncat, n_trees, bootstrap, max_depth, min_leaf, mtry, seed):
    G = Xu.shape[0]
    n = y.shape[0]
    store = _new_store(16 * n_trees)
    used = 0
    roots = np.empty(n_trees, dtype=np.int64)
    sw = np.zeros(G)
    s1 = np.zeros(G)
    s2 = np.zeros(G)
    cnt = np.zeros(G)
    for t in range(n_trees):
        rng = _tree_state(seed, t)
        sw[:] = 0.0
        s1[:] = 0.0
        s2[:] = 0.0
        cnt[:] = 0.0
        if bootstrap:
            for _ in range(n):
                i = _randint(rng, n)
                g = inv[i]
                sw[g] += w[i]
                s1[g] += w[i] * y[i]
                s2[g] += w[i] * y[i] * y[i]
                cnt[g] += 1.0
        else:
            for i in range(n):
                g = inv[i]
                sw[g] += w[i]
                s1[g] += w[i] * y[i]
                s2[g] += w[i] * y[i] * y[i]
                cnt[g] += 1.0
        roots[t] = used
        store, used = _append(store, used, _build_tree(Xu, ncat, sw, s1, s2, cnt, max_depth, min_leaf, mtry, rng))
    sf, sl, sr, sv, sm, sd = store
    return roots, sf[:used], sl[:used], sr[:used], sv[:used], sm[:used], sd[:used]


@njit(cache=True)
def _gbt_fit(Xu, inv, y, w, ncat, n_rounds, rate, max_depth, min_leaf, seed):
    G, M = Xu.shape
    n = y.shape[0]
    sw = np.zeros(G)
    sy = np.zeros(G)
    syy = np.zeros(G)
    cnt = np.zeros(G)
    for i in range(n):
        g = inv[i]
        sw[g] += w[i]
        sy[g] += w[i] * y[i]
        syy[g] += w[i] * y[i] * y[i]
        cnt[g] += 1.0
    base = sy.sum() / sw.sum()
    F = np.full(G, base)
    store = _new_store(16 * max(n_rounds, 1))
    used = 0
    roots = np.empty(n_rounds, dtype=np.int64)
    r1 = np.zeros(G)
    r2 = np.zeros(G)
    one = np.zeros(1, dtype=np.int64)
    for t in range(n_rounds):
        rng = _tree_state(seed, t)
        for g in range(G):
            r1[g] = sy[g] - sw[g] * F[g]
            r2[g] = syy[g] - 2.0 * F[g] * sy[g] + F[g] * F[g] * sw[g]
        feat, left, right, value, mask, dleft = _build_tree(Xu, ncat, sw, r1, r2, cnt, max_depth, min_leaf, M, rng)
        value = value * rate
        roots[t] = used
        store, used = _append(store, used, (feat, left, right, value, mask, dleft))
        F += _predict_patterns(Xu, ncat, one, feat, left, right, value, mask, dleft)
    sf, sl, sr, sv, sm, sd = store
    return base, roots, sf[:used], sl[:used], sr[:used], sv[:used], sm[:used], sd[:used]


_NAMES = ("roots", "feat", "left", "right", "value", "mask", "dleft")


def fit_forest(codes, ncat, y, w, *, n_trees, bootstrap, max_depth, min_leaf, mtry, seed):
    """Fit a bagged forest on integer-coded circumstances; returns tree arrays."""
    Xu, inv = _patterns(codes, y, w)
    arrays = _forest_fit(
        Xu, inv, y, w, ncat, int(n_trees), bool(bootstrap), int(max_depth), float(min_leaf), int(mtry), int(seed)
    )
    state = dict(zip(_NAMES, arrays))
    state["scale"] = 1.0 / int(n_trees)
    state["base"] = 0.0
    return state


def fit_gbt(codes, ncat, y, w, *, n_rounds, learning_rate, max_depth, min_leaf, seed):
    Xu, inv = _patterns(codes, y, w)
    base, *arrays = _gbt_fit(
        Xu, inv, y, w, ncat, int(n_rounds), float(learning_rate), int(max_depth), float(min_leaf), int(seed)
    )
    state = dict(zip(_NAMES, arrays))
    state["scale"] = 1.0
    state["base"] = float(base)
    return state


def predict_trees(state, codes, ncat):
    """Ensemble prediction for integer-coded rows (unseen labels coded -1)."""
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    Xu, inv = np.unique(codes, axis=0, return_inverse=True)
    inv = inv.ravel()
    if state["roots"].shape[0] == 0:
        return np.full(codes.shape[0], state["base"])
    vals = _predict_patterns(
        np.ascontiguousarray(Xu),
        ncat,
        state["roots"],
        state["feat"],
        state["left"],
        state["right"],
        state["value"],
        state["mask"],
        state["dleft"],
    )
    return state["base"] + state["scale"] * vals[inv]


def _patterns(codes, y, w):
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    if codes.shape[1] == 0:
        return np.zeros((1, 0), dtype=np.int64), np.zeros(codes.shape[0], dtype=np.int64)
    Xu, inv = np.unique(codes, axis=0, return_inverse=True)
    return np.ascontiguousarray(Xu), np.ascontiguousarray(inv.ravel(), dtype=np.int64)
