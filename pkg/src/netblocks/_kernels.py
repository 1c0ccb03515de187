"""Jitted inner loops for the E-step sweep and the class-weight objective.

The sweep is sequential by design: each interaction's position-pair
posterior is updated in place and the per-node log-factor cache is
refreshed before the next interaction is visited.  All exponentials are
max-subtracted; quantities that enter only as ratios share the same
shift so it cancels.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def estep_sweep(send, recv, lam, epi, ezeta, train_t, ylab,
                eta_n, m_eta, exp_eta, S, slot_log):
    """One in-order sweep updating lam rows and the factor cache.

    train_t maps node id -> compact train index (or -1), eta_n/m_eta/
    exp_eta are the per-train-node tables of eta[c, k] / n_v (raw, row
    max, shifted exp).  Returns -1 on success or the offending
    interaction index on a non-finite intermediate.
    """
    n_inter = send.shape[0]
    K = lam.shape[1]
    C = S.shape[1]
    A = np.empty((K, K))
    tmp = np.empty((C, K))
    h = np.empty(K)
    marg = np.empty(K)

    for i in range(n_inter):
        s = send[i]
        r = recv[i]
        ts = train_t[s]
        tr = train_t[r]
        selfloop = s == r

        for k1 in range(K):
            b = ezeta[k1, s]
            for k2 in range(K):
                A[k1, k2] = b + ezeta[k2, r] + epi[k1, k2]

        if ts >= 0:
            # sender marginal of lam before its own update
            for k1 in range(K):
                acc = 0.0
                for k2 in range(K):
                    acc += lam[i, k1, k2]
                marg[k1] = acc
            mx = -1.0e308
            for c in range(C):
                rem = slot_log[i, 0, c]
                if selfloop:
                    rem += slot_log[i, 1, c]
                base = S[s, c] - rem
                for k in range(K):
                    val = eta_n[ts, c, k] + base
                    tmp[c, k] = val
                    if val > mx:
                        mx = val
            denom = 0.0
            for k in range(K):
                acc = 0.0
                for c in range(C):
                    acc += np.exp(tmp[c, k] - mx)
                h[k] = acc
                denom += acc * marg[k]
            if not denom > 0.0 or not np.isfinite(denom):
                return i
            yv = ylab[s]
            for k1 in range(K):
                add = eta_n[ts, yv, k1] - h[k1] / denom
                for k2 in range(K):
                    A[k1, k2] += add

        if tr >= 0:
            for k2 in range(K):
                acc = 0.0
                for k1 in range(K):
                    acc += lam[i, k1, k2]
                marg[k2] = acc
            mx = -1.0e308
            for c in range(C):
                rem = slot_log[i, 1, c]
                if selfloop:
                    rem += slot_log[i, 0, c]
                base = S[r, c] - rem
                for k in range(K):
                    val = eta_n[tr, c, k] + base
                    tmp[c, k] = val
                    if val > mx:
                        mx = val
            denom = 0.0
            for k in range(K):
                acc = 0.0
                for c in range(C):
                    acc += np.exp(tmp[c, k] - mx)
                h[k] = acc
                denom += acc * marg[k]
            if not denom > 0.0 or not np.isfinite(denom):
                return i
            yv = ylab[r]
            for k2 in range(K):
                add = eta_n[tr, yv, k2] - h[k2] / denom
                for k1 in range(K):
                    A[k1, k2] += add

        mx = A[0, 0]
        for k1 in range(K):
            for k2 in range(K):
                if A[k1, k2] > mx:
                    mx = A[k1, k2]
        if not np.isfinite(mx):
            return i
        z = 0.0
        for k1 in range(K):
            for k2 in range(K):
                e = np.exp(A[k1, k2] - mx)
                lam[i, k1, k2] = e
                z += e
        inv_z = 1.0 / z
        for k1 in range(K):
            for k2 in range(K):
                lam[i, k1, k2] *= inv_z

        # refresh cached factors for labelled endpoints
        if ts >= 0:
            for k1 in range(K):
                acc = 0.0
                for k2 in range(K):
                    acc += lam[i, k1, k2]
                marg[k1] = acc
            for c in range(C):
                acc = 0.0
                for k in range(K):
                    acc += marg[k] * exp_eta[ts, c, k]
                if not acc > 0.0:
                    return i
                new = m_eta[ts, c] + np.log(acc)
                S[s, c] += new - slot_log[i, 0, c]
                slot_log[i, 0, c] = new
        if tr >= 0:
            for k2 in range(K):
                acc = 0.0
                for k1 in range(K):
                    acc += lam[i, k1, k2]
                marg[k2] = acc
            for c in range(C):
                acc = 0.0
                for k in range(K):
                    acc += marg[k] * exp_eta[tr, c, k]
                if not acc > 0.0:
                    return i
                new = m_eta[tr, c] + np.log(acc)
                S[r, c] += new - slot_log[i, 1, c]
                slot_log[i, 1, c] = new
    return -1


@numba.njit(cache=True)
def slot_factors(m_eta, exp_eta, slot_t, slot_lam):
    """Per-slot log factors log(sum_k lam_k exp(eta_ck / n_v)) and their
    per-train-node sums."""
    n_slots = slot_t.shape[0]
    T, C = m_eta.shape
    K = exp_eta.shape[2]
    slot_lf = np.empty((n_slots, C))
    S = np.zeros((T, C))
    for s in range(n_slots):
        t = slot_t[s]
        for c in range(C):
            acc = 0.0
            for k in range(K):
                acc += slot_lam[s, k] * exp_eta[t, c, k]
            lv = m_eta[t, c] + np.log(acc)
            slot_lf[s, c] = lv
            S[t, c] += lv
    return slot_lf, S


@numba.njit(cache=True)
def eta_value_grad(eta, m_eta, exp_eta, slot_t, slot_lam,
                   inv_n_t, y_t, lambar, want_grad):
    """Softmax free-energy terms over train nodes and their eta gradient.

    Value: sum_t eta[y_t] . lambar_t - logsumexp_c S_tc where S_tc is the
    sum over the node's slots of log(sum_k lam_k exp(eta_ck / n_v)).
    """
    n_slots = slot_t.shape[0]
    T, C = m_eta.shape
    K = exp_eta.shape[2]

    fac = np.empty((n_slots, C))
    S = np.zeros((T, C))
    for s in range(n_slots):
        t = slot_t[s]
        for c in range(C):
            acc = 0.0
            for k in range(K):
                acc += slot_lam[s, k] * exp_eta[t, c, k]
            fac[s, c] = acc
            S[t, c] += m_eta[t, c] + np.log(acc)

    obj = 0.0
    p = np.empty((T, C))
    for t in range(T):
        yt = y_t[t]
        for k in range(K):
            obj += eta[yt, k] * lambar[t, k]
        mx = S[t, 0]
        for c in range(1, C):
            if S[t, c] > mx:
                mx = S[t, c]
        zz = 0.0
        for c in range(C):
            e = np.exp(S[t, c] - mx)
            p[t, c] = e
            zz += e
        obj -= mx + np.log(zz)
        inv = 1.0 / zz
        for c in range(C):
            p[t, c] *= inv

    grad = np.zeros((C, K))
    if want_grad:
        for t in range(T):
            yt = y_t[t]
            for k in range(K):
                grad[yt, k] += lambar[t, k]
        for s in range(n_slots):
            t = slot_t[s]
            w0 = inv_n_t[t]
            for c in range(C):
                w = p[t, c] * w0 / fac[s, c]
                for k in range(K):
                    grad[c, k] -= w * slot_lam[s, k] * exp_eta[t, c, k]
    return obj, grad
