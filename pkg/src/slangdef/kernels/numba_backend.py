"""Numba-jitted twins of the numpy sequence kernels.

Same signatures and same operation order as `numpy_backend`; matrix products
go through np.dot (LAPACK, bit-identical to numpy's @ here) and elementwise
transcendentals through libm, so the two backends agree to within a few ULPs
per step. Compiled artifacts are cached on disk, so the JIT cost is paid once
per machine.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, fastmath=False)
def _sigmoid_scalar(x):
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True, fastmath=False)
def _gate_step(wi, wf, wo, wc, z, m_prev):
    dh = m_prev.shape[0]
    ai = np.dot(z, wi)
    af = np.dot(z, wf)
    ao = np.dot(z, wo)
    ac = np.dot(z, wc)
    i = np.empty(dh)
    f = np.empty(dh)
    o = np.empty(dh)
    c = np.empty(dh)
    m = np.empty(dh)
    h = np.empty(dh)
    for k in range(dh):
        i[k] = _sigmoid_scalar(ai[k])
        f[k] = _sigmoid_scalar(af[k])
        o[k] = _sigmoid_scalar(ao[k])
        c[k] = np.tanh(ac[k])
        m[k] = m_prev[k] * f[k] + i[k] * c[k]
        h[k] = m[k] * o[k]
    return i, f, o, c, m, h


@njit(cache=True, fastmath=False)
def lstm_seq_forward(wi, wf, wo, wc, xs, h0, m0):
    seq_len = xs.shape[0]
    din = xs.shape[1]
    dh = h0.shape[0]
    hs = np.empty((seq_len, dh))
    ms = np.empty((seq_len, dh))
    is_ = np.empty((seq_len, dh))
    fs = np.empty((seq_len, dh))
    os_ = np.empty((seq_len, dh))
    cs = np.empty((seq_len, dh))
    z = np.empty(din + dh)
    h = h0.copy()
    m = m0.copy()
    for t in range(seq_len):
        z[:din] = xs[t]
        z[din:] = h
        i, f, o, c, m, h = _gate_step(wi, wf, wo, wc, z, m)
        is_[t] = i
        fs[t] = f
        os_[t] = o
        cs[t] = c
        ms[t] = m
        hs[t] = h
    return hs, ms, is_, fs, os_, cs


@njit(cache=True, fastmath=False)
def _gate_backward(dh_t, dm_next, i, f, o, c, m, m_prev):
    dh = dh_t.shape[0]
    dai = np.empty(dh)
    daf = np.empty(dh)
    dao = np.empty(dh)
    dac = np.empty(dh)
    dm_prev = np.empty(dh)
    for k in range(dh):
        do = dh_t[k] * m[k]
        dm = dh_t[k] * o[k] + dm_next[k]
        di = dm * c[k]
        df = dm * m_prev[k]
        dc = dm * i[k]
        dm_prev[k] = dm * f[k]
        dai[k] = di * i[k] * (1.0 - i[k])
        daf[k] = df * f[k] * (1.0 - f[k])
        dao[k] = do * o[k] * (1.0 - o[k])
        dac[k] = dc * (1.0 - c[k] * c[k])
    return dai, daf, dao, dac, dm_prev


@njit(cache=True, fastmath=False)
def _accumulate_outer(dw, z, da):
    for j in range(z.shape[0]):
        zj = z[j]
        for k in range(da.shape[0]):
            dw[j, k] += zj * da[k]


@njit(cache=True, fastmath=False)
def lstm_seq_backward(wi, wf, wo, wc, xs, h0, m0, hs, ms, is_, fs, os_, cs,
                      d_hs, dh_last, dm_last):
    seq_len, din = xs.shape
    dh = h0.shape[0]
    dwi = np.zeros_like(wi)
    dwf = np.zeros_like(wf)
    dwo = np.zeros_like(wo)
    dwc = np.zeros_like(wc)
    dxs = np.empty_like(xs)
    wi_t = np.ascontiguousarray(wi.T)
    wf_t = np.ascontiguousarray(wf.T)
    wo_t = np.ascontiguousarray(wo.T)
    wc_t = np.ascontiguousarray(wc.T)
    dh_next = dh_last.copy()
    dm_next = dm_last.copy()
    z = np.empty(din + dh)
    for t in range(seq_len - 1, -1, -1):
        m_prev = ms[t - 1] if t > 0 else m0
        h_prev = hs[t - 1] if t > 0 else h0
        dh_t = d_hs[t] + dh_next
        dai, daf, dao, dac, dm_next = _gate_backward(
            dh_t, dm_next, is_[t], fs[t], os_[t], cs[t], ms[t], m_prev)
        z[:din] = xs[t]
        z[din:] = h_prev
        _accumulate_outer(dwi, z, dai)
        _accumulate_outer(dwf, z, daf)
        _accumulate_outer(dwo, z, dao)
        _accumulate_outer(dwc, z, dac)
        dz = np.dot(dai, wi_t) + np.dot(daf, wf_t) + np.dot(dao, wo_t) \
            + np.dot(dac, wc_t)
        dxs[t] = dz[:din]
        dh_next = dz[din:]
    return dwi, dwf, dwo, dwc, dxs, dh_next, dm_next


@njit(cache=True, fastmath=False)
def decoder_forward(wi, wf, wo, wc, wa1, wa2, va, wp, bp,
                    emb, henc, h0, m0, targets):
    steps, demb = emb.shape
    t1, dh = henc.shape
    da = va.shape[0]
    vocab = bp.shape[0]
    din = demb + dh
    hw1 = np.dot(henc, wa1)
    xs = np.empty((steps, din))
    hs = np.empty((steps, dh))
    ms = np.empty((steps, dh))
    is_ = np.empty((steps, dh))
    fs = np.empty((steps, dh))
    os_ = np.empty((steps, dh))
    cs = np.empty((steps, dh))
    tus = np.empty((steps, t1, da))
    ats = np.empty((steps, t1))
    ctxs = np.empty((steps, dh))
    logits_all = np.empty((steps, vocab))
    probs = np.empty((steps, vocab))
    h = h0.copy()
    m = m0.copy()
    ctx = np.zeros(dh)
    z = np.empty(din + dh)
    comb = np.empty(2 * dh)
    u = np.empty(t1)
    loss = 0.0
    for t in range(steps):
        xs[t, :demb] = emb[t]
        xs[t, demb:] = ctx
        z[:din] = xs[t]
        z[din:] = h
        i, f, o, c, m, h = _gate_step(wi, wf, wo, wc, z, m)
        is_[t] = i
        fs[t] = f
        os_[t] = o
        cs[t] = c
        ms[t] = m
        hs[t] = h
        q = np.dot(h, wa2)
        for r in range(t1):
            for k in range(da):
                tus[t, r, k] = np.tanh(hw1[r, k] + q[k])
            u[r] = np.dot(tus[t, r], va)
        umax = u[0]
        for r in range(1, t1):
            if u[r] > umax:
                umax = u[r]
        usum = 0.0
        for r in range(t1):
            ats[t, r] = np.exp(u[r] - umax)
            usum += ats[t, r]
        for r in range(t1):
            ats[t, r] /= usum
        ctx = np.dot(ats[t], henc)
        ctxs[t] = ctx
        comb[:dh] = ctx
        comb[dh:] = h
        logits = np.dot(comb, wp) + bp
        logits_all[t] = logits
        mx = logits[0]
        for k in range(1, vocab):
            if logits[k] > mx:
                mx = logits[k]
        esum = 0.0
        for k in range(vocab):
            esum += np.exp(logits[k] - mx)
        lse = mx + np.log(esum)
        loss += lse - logits[targets[t]]
        for k in range(vocab):
            probs[t, k] = np.exp(logits[k] - lse)
    return (loss, xs, hs, ms, is_, fs, os_, cs, tus, ats, ctxs,
            logits_all, probs, hw1)


@njit(cache=True, fastmath=False)
def decoder_backward(wi, wf, wo, wc, wa1, wa2, va, wp, bp,
                     emb, henc, h0, m0, targets,
                     xs, hs, ms, is_, fs, os_, cs, tus, ats, ctxs, probs):
    steps, demb = emb.shape
    t1, dh = henc.shape
    da = va.shape[0]
    din = demb + dh
    dwi = np.zeros_like(wi)
    dwf = np.zeros_like(wf)
    dwo = np.zeros_like(wo)
    dwc = np.zeros_like(wc)
    dwa1 = np.zeros_like(wa1)
    dwa2 = np.zeros_like(wa2)
    dva = np.zeros_like(va)
    dwp = np.zeros_like(wp)
    dbp = np.zeros_like(bp)
    demb_rows = np.empty_like(emb)
    dhenc = np.zeros_like(henc)
    dhw1 = np.zeros((t1, da))
    wi_t = np.ascontiguousarray(wi.T)
    wf_t = np.ascontiguousarray(wf.T)
    wo_t = np.ascontiguousarray(wo.T)
    wc_t = np.ascontiguousarray(wc.T)
    wa2_t = np.ascontiguousarray(wa2.T)
    wa1_t = np.ascontiguousarray(wa1.T)
    wp_t = np.ascontiguousarray(wp.T)
    henc_t = np.ascontiguousarray(henc.T)
    dh_next = np.zeros(dh)
    dm_next = np.zeros(dh)
    dctx_next = np.zeros(dh)
    z = np.empty(din + dh)
    comb = np.empty(2 * dh)
    for t in range(steps - 1, -1, -1):
        dlogits = probs[t].copy()
        dlogits[targets[t]] -= 1.0
        comb[:dh] = ctxs[t]
        comb[dh:] = hs[t]
        _accumulate_outer(dwp, comb, dlogits)
        dbp += dlogits
        dcomb = np.dot(dlogits, wp_t)
        dctx = dcomb[:dh] + dctx_next
        dd = dcomb[dh:].copy()
        att = ats[t]
        tu = tus[t]
        datt = np.dot(henc, dctx)
        _accumulate_outer(dhenc, att, dctx)
        s = np.dot(att, datt)
        du = att * (datt - s)
        dq = np.zeros(da)
        for r in range(t1):
            tur = tu[r]
            dur = du[r]
            for k in range(da):
                dva[k] += dur * tur[k]
                darg = dur * va[k] * (1.0 - tur[k] * tur[k])
                dhw1[r, k] += darg
                dq[k] += darg
        _accumulate_outer(dwa2, hs[t], dq)
        dd += np.dot(dq, wa2_t)
        m_prev = ms[t - 1] if t > 0 else m0
        h_prev = hs[t - 1] if t > 0 else h0
        dh_t = dd + dh_next
        dai, daf, dao, dac, dm_next = _gate_backward(
            dh_t, dm_next, is_[t], fs[t], os_[t], cs[t], ms[t], m_prev)
        z[:din] = xs[t]
        z[din:] = h_prev
        _accumulate_outer(dwi, z, dai)
        _accumulate_outer(dwf, z, daf)
        _accumulate_outer(dwo, z, dao)
        _accumulate_outer(dwc, z, dac)
        dz = np.dot(dai, wi_t) + np.dot(daf, wf_t) + np.dot(dao, wo_t) \
            + np.dot(dac, wc_t)
        demb_rows[t] = dz[:demb]
        dctx_next = dz[demb:din].copy()
        dh_next = dz[din:].copy()
    dwa1 += np.dot(henc_t, dhw1)
    dhenc += np.dot(dhw1, wa1_t)
    return (dwi, dwf, dwo, dwc, dwa1, dwa2, dva, dwp, dbp,
            demb_rows, dhenc, dh_next, dm_next)
