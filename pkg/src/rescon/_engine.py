"""Compiled per-step simulation loop.

One call advances a single seeded run through every step: exchanged states,
tracking errors, both detectors, the trust filters, the (optionally
trust-weighted) control and the RK4 update.  The Python-level modules
(``detection``, ``mitigation``) define the same quantities step by step; the
test suite checks the two against each other.
"""
import math

import numpy as np
from numba import njit

from ._kernels import folded_fit, folded_kl_scalar, gaussian_kl_core


@njit(cache=True)
def _ring_push(buf, s1, s2, pos, count, x, vector):
    """Push x (shape (d,)) into ring ``buf`` (T, d); update sums s1 (d,), s2 (d, d)."""
    T, d = buf.shape
    if count == T:
        for a in range(d):
            s1[a] -= buf[pos, a]
            for b in range(d):
                if vector or a == b:
                    s2[a, b] -= buf[pos, a] * buf[pos, b]
    for a in range(d):
        buf[pos, a] = x[a]
        s1[a] += x[a]
        for b in range(d):
            if vector or a == b:
                s2[a, b] += x[a] * x[b]


@njit(cache=True)
def _ring_refresh(buf, s1, s2, count, vector):
    T, d = buf.shape
    s1[:] = 0.0
    s2[:, :] = 0.0
    for k in range(count):
        for a in range(d):
            s1[a] += buf[k, a]
            for b in range(d):
                if vector or a == b:
                    s2[a, b] += buf[k, a] * buf[k, b]


@njit(cache=True)
def _fit_gauss(s1, s2, count, mean, cov):
    d = s1.size
    for a in range(d):
        mean[a] = s1[a] / count
    for a in range(d):
        for b in range(d):
            cov[a, b] = s2[a, b] / count - mean[a] * mean[b]


@njit(cache=True, nogil=True)
def run_loop(Phi, Gamma, cK, tails, heads, weights, x0, noise, sensor, link, actuator, times,
             window, trust_window, warmup, gamma_imp, gamma_nonimp, has_gamma, nominal_cov,
             Delta, kappa1, kappa2, kappa3, Lambda1, Lambda2, dt, mitigate, floor, cap):
    K1 = times.size
    N, d = x0.shape
    m = cK.shape[0]
    E = tails.size

    X_rec = np.empty((K1, N, d))
    eta_true = np.empty((K1, N, d))
    eta_used = np.empty((K1, N, d))
    uc_rec = np.empty((K1, N, m))
    tau_rec = np.empty((K1, N))
    phi_rec = np.empty((K1, N))
    kl_imp = np.zeros((K1, N))
    kl_non = np.zeros((K1, N))
    avg_imp = np.zeros((K1, N))
    avg_non = np.zeros((K1, N))
    h_imp = np.zeros((K1, N), dtype=np.int8)
    h_non = np.zeros((K1, N), dtype=np.int8)
    c1_rec = np.empty((K1, N))
    c2_rec = np.empty((K1, N))
    eraw_rec = np.empty((K1, E))
    omega_rec = np.empty((K1, E))
    dlink_rec = np.zeros((K1, E))
    diverged_at = -1

    indeg = np.zeros(N)
    for e in range(E):
        indeg[heads[e]] += 1.0

    # detector windows per agent
    tau_buf = np.zeros((N, window, 1))
    tau_s1 = np.zeros((N, 1))
    tau_s2 = np.zeros((N, 1, 1))
    phi_buf = np.zeros((N, window, 1))
    phi_s1 = np.zeros((N, 1))
    phi_s2 = np.zeros((N, 1, 1))
    eta_buf = np.zeros((N, window, d))
    eta_s1 = np.zeros((N, d))
    eta_s2 = np.zeros((N, d, d))
    kli_buf = np.zeros((N, window, 1))
    kli_s1 = np.zeros((N, 1))
    kli_s2 = np.zeros((N, 1, 1))
    kln_buf = np.zeros((N, window, 1))
    kln_s1 = np.zeros((N, 1))
    kln_s2 = np.zeros((N, 1, 1))
    det_count = 0
    det_pos = 0
    kl_count = 0
    kl_pos = 0
    # trust windows: received stream per edge, normalized aggregate per agent
    rx_buf = np.zeros((E, trust_window, d))
    rx_s1 = np.zeros((E, d))
    rx_s2 = np.zeros((E, d, d))
    ag_buf = np.zeros((N, trust_window, d))
    ag_s1 = np.zeros((N, d))
    ag_s2 = np.zeros((N, d, d))
    tr_count = 0
    tr_pos = 0

    c1 = np.ones(N)
    c2 = np.ones(N)
    eraw = np.ones(E)
    omega = np.ones(E)
    xi = np.ones(N)

    X = x0.copy()
    Xc = np.empty((N, d))
    recv = np.empty((E, d))
    agg = np.empty((N, d))
    eta_raw = np.empty((N, d))
    eta_ctl = np.empty((N, d))
    u = np.empty((N, m))
    scal = np.empty(1)
    mean_p = np.empty(d)
    cov_p = np.empty((d, d))
    mean_q = np.empty(d)
    cov_q = np.empty((d, d))
    zero = np.zeros(d)
    a1 = dt * kappa1
    a2 = dt * kappa2
    a3 = dt * kappa3

    for k in range(K1):
        t = times[k]
        for i in range(N):
            for a in range(d):
                Xc[i, a] = X[i, a] + sensor[k, i, a]
                eta_raw[i, a] = 0.0
                eta_true[k, i, a] = 0.0
                agg[i, a] = 0.0
            phi_rec[k, i] = 0.0
        for e in range(E):
            j = tails[e]
            i = heads[e]
            w = weights[e]
            nrm = 0.0
            for a in range(d):
                recv[e, a] = Xc[j, a] + link[k, e, a] + noise[k, e, a]
                ad = w * (recv[e, a] - Xc[i, a])
                eta_raw[i, a] += ad
                nrm += ad * ad
                eta_true[k, i, a] += w * (X[j, a] - X[i, a])
                agg[i, a] += recv[e, a]
            phi_rec[k, i] += math.sqrt(nrm)
        for i in range(N):
            nrm = 0.0
            for a in range(d):
                nrm += eta_raw[i, a] * eta_raw[i, a]
                if indeg[i] > 0:
                    agg[i, a] /= indeg[i]
            tau_rec[k, i] = math.sqrt(nrm)

        # ---- detectors
        for i in range(N):
            scal[0] = tau_rec[k, i]
            _ring_push(tau_buf[i], tau_s1[i], tau_s2[i], det_pos, det_count, scal, False)
            scal[0] = phi_rec[k, i]
            _ring_push(phi_buf[i], phi_s1[i], phi_s2[i], det_pos, det_count, scal, False)
            _ring_push(eta_buf[i], eta_s1[i], eta_s2[i], det_pos, det_count, eta_raw[i], True)
        det_count = min(det_count + 1, window)
        det_pos = (det_pos + 1) % window
        if det_pos == 0:
            for i in range(N):
                _ring_refresh(tau_buf[i], tau_s1[i], tau_s2[i], det_count, False)
                _ring_refresh(phi_buf[i], phi_s1[i], phi_s2[i], det_count, False)
                _ring_refresh(eta_buf[i], eta_s1[i], eta_s2[i], det_count, True)
        det_ready = det_count == window
        active = det_ready and t > warmup
        if det_ready:
            for i in range(N):
                if tau_s1[i, 0] == phi_s1[i, 0] and tau_s2[i, 0, 0] == phi_s2[i, 0, 0]:
                    # single in-neighbor (or none): tau and phi coincide
                    kl_imp[k, i] = 0.0
                else:
                    mt = tau_s1[i, 0] / window
                    mp = phi_s1[i, 0] / window
                    mu_t, s_t = folded_fit(mt, tau_s2[i, 0, 0] / window - mt * mt, floor)
                    mu_p, s_p = folded_fit(mp, phi_s2[i, 0, 0] / window - mp * mp, floor)
                    kl_imp[k, i] = folded_kl_scalar(mu_p, s_p, mu_t, s_t)
                _fit_gauss(eta_s1[i], eta_s2[i], float(window), mean_p, cov_p)
                kl_non[k, i] = gaussian_kl_core(mean_p, cov_p, zero, nominal_cov[i], floor)
                scal[0] = kl_imp[k, i]
                _ring_push(kli_buf[i], kli_s1[i], kli_s2[i], kl_pos, kl_count, scal, False)
                scal[0] = kl_non[k, i]
                _ring_push(kln_buf[i], kln_s1[i], kln_s2[i], kl_pos, kl_count, scal, False)
            kl_count = min(kl_count + 1, window)
            kl_pos = (kl_pos + 1) % window
            if kl_pos == 0:
                for i in range(N):
                    _ring_refresh(kli_buf[i], kli_s1[i], kli_s2[i], kl_count, False)
                    _ring_refresh(kln_buf[i], kln_s1[i], kln_s2[i], kl_count, False)
            for i in range(N):
                avg_imp[k, i] = kli_s1[i, 0] / kl_count
                avg_non[k, i] = kln_s1[i, 0] / kl_count
                if active and has_gamma:
                    h_imp[k, i] = 1 if avg_imp[k, i] > gamma_imp[i] else 0
                    h_non[k, i] = 1 if avg_non[k, i] > gamma_nonimp[i] else 0

        # ---- confidences and self-belief
        for i in range(N):
            di = kl_imp[k, i] if active else 0.0
            dn = kl_non[k, i] if active else 0.0
            c1[i] = min(max(c1[i] + a1 * (Delta[i] / (Delta[i] + di) - c1[i]), 0.0), 1.0)
            c2[i] = min(max(c2[i] + a2 * (Delta[i] / (Delta[i] + dn) - c2[i]), 0.0), 1.0)
            xi[i] = min(c1[i], c2[i])
            c1_rec[k, i] = c1[i]
            c2_rec[k, i] = c2[i]

        # ---- raw trust from received stream vs normalized aggregate
        for e in range(E):
            _ring_push(rx_buf[e], rx_s1[e], rx_s2[e], tr_pos, tr_count, recv[e], True)
        for i in range(N):
            _ring_push(ag_buf[i], ag_s1[i], ag_s2[i], tr_pos, tr_count, agg[i], True)
        tr_count = min(tr_count + 1, trust_window)
        tr_pos = (tr_pos + 1) % trust_window
        if tr_pos == 0:
            for e in range(E):
                _ring_refresh(rx_buf[e], rx_s1[e], rx_s2[e], tr_count, True)
            for i in range(N):
                _ring_refresh(ag_buf[i], ag_s1[i], ag_s2[i], tr_count, True)
        tr_active = tr_count == trust_window and t > warmup
        for e in range(E):
            if tr_count == trust_window:
                _fit_gauss(rx_s1[e], rx_s2[e], float(trust_window), mean_p, cov_p)
                _fit_gauss(ag_s1[heads[e]], ag_s2[heads[e]], float(trust_window), mean_q, cov_q)
                dlink_rec[k, e] = gaussian_kl_core(mean_p, cov_p, mean_q, cov_q, floor)
            if tr_active:
                D = dlink_rec[k, e]
                ex = math.exp(-Lambda2 / D) if D > 0.0 else 0.0
                L = 1.0 - Lambda1 / (Lambda1 + ex)
                eraw[e] = min(max(eraw[e] + a3 * (L - eraw[e]), 0.0), 1.0)
            omega[e] = max(xi[heads[e]], eraw[e])
            eraw_rec[k, e] = eraw[e]
            omega_rec[k, e] = omega[e]

        # ---- control
        if mitigate:
            for i in range(N):
                for a in range(d):
                    eta_ctl[i, a] = 0.0
            for e in range(E):
                j = tails[e]
                i = heads[e]
                wgt = omega[e] * xi[j] * weights[e]
                for a in range(d):
                    eta_ctl[i, a] += wgt * (recv[e, a] - noise[k, e, a] - Xc[i, a]) + weights[e] * noise[k, e, a]
        else:
            eta_ctl[:, :] = eta_raw
        for i in range(N):
            for r in range(m):
                acc = actuator[k, i, r]
                for a in range(d):
                    acc += cK[r, a] * eta_ctl[i, a]
                u[i, r] = acc
                uc_rec[k, i, r] = acc
            for a in range(d):
                eta_used[k, i, a] = eta_ctl[i, a]
                X_rec[k, i, a] = X[i, a]
                if diverged_at < 0 and not abs(X[i, a]) <= cap:
                    diverged_at = k

        # ---- RK4 (zero-order hold) update
        if k + 1 < K1:
            Xn = np.empty((N, d))
            for i in range(N):
                for a in range(d):
                    acc = 0.0
                    for b in range(d):
                        acc += Phi[a, b] * X[i, b]
                    for r in range(m):
                        acc += Gamma[a, r] * u[i, r]
                    Xn[i, a] = acc
            X = Xn

    return (X_rec, eta_true, eta_used, uc_rec, tau_rec, phi_rec, kl_imp, kl_non, avg_imp, avg_non,
            h_imp, h_non, c1_rec, c2_rec, eraw_rec, omega_rec, dlink_rec, diverged_at)
