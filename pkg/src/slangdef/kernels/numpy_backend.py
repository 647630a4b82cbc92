"""Pure-numpy sequence kernels (reference path).

These are the hot inner loops of training: running an LSTM over a whole
sequence, backpropagation through time, and the fused teacher-forced decoder
step (LSTM + attention + projection + cross-entropy). The numba backend
mirrors these functions signature-for-signature; tests hold the two within
1e-12 of each other.

All arguments are raw float64 arrays. Vectors are 1-D here (the row-vector
wrapping/unwrapping happens in the layer objects).
"""

from __future__ import annotations

import numpy as np


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_seq_forward(wi, wf, wo, wc, xs, h0, m0):
    """Run the gate recurrence over a whole sequence.

    xs: (T, din); h0, m0: (dh,). Returns stacked per-step arrays
    (H, M, I, F, O, C), each (T, dh). H[t] is the hidden state after step t.
    """
    seq_len = xs.shape[0]
    dh = h0.shape[0]
    hs = np.empty((seq_len, dh))
    ms = np.empty((seq_len, dh))
    is_ = np.empty((seq_len, dh))
    fs = np.empty((seq_len, dh))
    os_ = np.empty((seq_len, dh))
    cs = np.empty((seq_len, dh))
    h = h0
    m = m0
    for t in range(seq_len):
        z = np.concatenate((xs[t], h))
        i = _sigmoid(z @ wi)
        f = _sigmoid(z @ wf)
        o = _sigmoid(z @ wo)
        c = np.tanh(z @ wc)
        m = m * f + i * c
        h = m * o
        is_[t] = i
        fs[t] = f
        os_[t] = o
        cs[t] = c
        ms[t] = m
        hs[t] = h
    return hs, ms, is_, fs, os_, cs


def lstm_seq_backward(wi, wf, wo, wc, xs, h0, m0, hs, ms, is_, fs, os_, cs,
                      d_hs, dh_last, dm_last):
    """Backpropagation through time for `lstm_seq_forward`.

    d_hs: (T, dh) upstream gradient on every hidden state; dh_last/dm_last:
    extra gradient on the final (h, m) (e.g. from fusion into a decoder).
    Returns (dwi, dwf, dwo, dwc, dxs, dh0, dm0).
    """
    seq_len, din = xs.shape
    dwi = np.zeros_like(wi)
    dwf = np.zeros_like(wf)
    dwo = np.zeros_like(wo)
    dwc = np.zeros_like(wc)
    dxs = np.empty_like(xs)
    wi_t = wi.T
    wf_t = wf.T
    wo_t = wo.T
    wc_t = wc.T
    dh_next = dh_last.copy()
    dm_next = dm_last.copy()
    for t in range(seq_len - 1, -1, -1):
        i = is_[t]
        f = fs[t]
        o = os_[t]
        c = cs[t]
        m = ms[t]
        m_prev = ms[t - 1] if t > 0 else m0
        h_prev = hs[t - 1] if t > 0 else h0
        dh = d_hs[t] + dh_next
        do = dh * m
        dm = dh * o + dm_next
        di = dm * c
        df = dm * m_prev
        dc = dm * i
        dm_next = dm * f
        dai = di * i * (1.0 - i)
        daf = df * f * (1.0 - f)
        dao = do * o * (1.0 - o)
        dac = dc * (1.0 - c * c)
        z = np.concatenate((xs[t], h_prev))
        dwi += np.outer(z, dai)
        dwf += np.outer(z, daf)
        dwo += np.outer(z, dao)
        dwc += np.outer(z, dac)
        dz = dai @ wi_t + daf @ wf_t + dao @ wo_t + dac @ wc_t
        dxs[t] = dz[:din]
        dh_next = dz[din:]
    return dwi, dwf, dwo, dwc, dxs, dh_next, dm_next


def decoder_forward(wi, wf, wo, wc, wa1, wa2, va, wp, bp,
                    emb, henc, h0, m0, targets):
    """Teacher-forced decoder over S steps with attention on `henc`.

    emb: (S, demb) embedded previous tokens (BOS first); henc: (T1, dh)
    encoder hidden states; targets: (S,) int64 token ids (gold outputs + EOS).
    Step t consumes [emb[t], context_{t-1}], updates the decoder LSTM, attends
    over henc with the new state, and scores [context_t, state_t] against
    targets[t]. Returns the summed cross-entropy and every intermediate needed
    by `decoder_backward`.
    """
    steps, demb = emb.shape
    t1, dh = henc.shape
    da = va.shape[0]
    vocab = bp.shape[0]
    din = demb + dh
    hw1 = henc @ wa1
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
    h = h0
    m = m0
    ctx = np.zeros(dh)
    loss = 0.0
    for t in range(steps):
        x = np.concatenate((emb[t], ctx))
        xs[t] = x
        z = np.concatenate((x, h))
        i = _sigmoid(z @ wi)
        f = _sigmoid(z @ wf)
        o = _sigmoid(z @ wo)
        c = np.tanh(z @ wc)
        m = m * f + i * c
        h = m * o
        is_[t] = i
        fs[t] = f
        os_[t] = o
        cs[t] = c
        ms[t] = m
        hs[t] = h
        tu = np.tanh(hw1 + h @ wa2)
        u = tu @ va
        u_shift = u - np.max(u)
        eu = np.exp(u_shift)
        att = eu / np.sum(eu)
        ctx = att @ henc
        tus[t] = tu
        ats[t] = att
        ctxs[t] = ctx
        logits = np.concatenate((ctx, h)) @ wp + bp
        logits_all[t] = logits
        mx = np.max(logits)
        lse = mx + np.log(np.sum(np.exp(logits - mx)))
        loss += lse - logits[targets[t]]
        probs[t] = np.exp(logits - lse)
    return (loss, xs, hs, ms, is_, fs, os_, cs, tus, ats, ctxs,
            logits_all, probs, hw1)


def decoder_backward(wi, wf, wo, wc, wa1, wa2, va, wp, bp,
                     emb, henc, h0, m0, targets,
                     xs, hs, ms, is_, fs, os_, cs, tus, ats, ctxs, probs):
    """Exact gradients of the summed decoder cross-entropy.

    Returns (dwi, dwf, dwo, dwc, dwa1, dwa2, dva, dwp, dbp,
             demb_rows, dhenc, dh0, dm0).
    """
    steps, demb = emb.shape
    t1, dh = henc.shape
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
    dhw1 = np.zeros((t1, wa1.shape[1]))
    wi_t = wi.T
    wf_t = wf.T
    wo_t = wo.T
    wc_t = wc.T
    wa2_t = wa2.T
    wp_t = wp.T
    dh_next = np.zeros(dh)
    dm_next = np.zeros(dh)
    dctx_next = np.zeros(dh)
    for t in range(steps - 1, -1, -1):
        dlogits = probs[t].copy()
        dlogits[targets[t]] -= 1.0
        comb = np.concatenate((ctxs[t], hs[t]))
        dwp += np.outer(comb, dlogits)
        dbp += dlogits
        dcomb = dlogits @ wp_t
        dctx = dcomb[:dh] + dctx_next
        dd = dcomb[dh:].copy()
        att = ats[t]
        tu = tus[t]
        datt = henc @ dctx
        dhenc += np.outer(att, dctx)
        du = att * (datt - att @ datt)
        dva += du @ tu
        dtu = np.outer(du, va)
        darg = dtu * (1.0 - tu * tu)
        dhw1 += darg
        dq = darg.sum(axis=0)
        dwa2 += np.outer(hs[t], dq)
        dd += dq @ wa2_t
        i = is_[t]
        f = fs[t]
        o = os_[t]
        c = cs[t]
        m = ms[t]
        m_prev = ms[t - 1] if t > 0 else m0
        h_prev = hs[t - 1] if t > 0 else h0
        dh_t = dd + dh_next
        do = dh_t * m
        dm = dh_t * o + dm_next
        di = dm * c
        df = dm * m_prev
        dc = dm * i
        dm_next = dm * f
        dai = di * i * (1.0 - i)
        daf = df * f * (1.0 - f)
        dao = do * o * (1.0 - o)
        dac = dc * (1.0 - c * c)
        z = np.concatenate((xs[t], h_prev))
        dwi += np.outer(z, dai)
        dwf += np.outer(z, daf)
        dwo += np.outer(z, dao)
        dwc += np.outer(z, dac)
        dz = dai @ wi_t + daf @ wf_t + dao @ wo_t + dac @ wc_t
        demb_rows[t] = dz[:demb]
        dctx_next = dz[demb:din]
        dh_next = dz[din:]
    dwa1 += henc.T @ dhw1
    dhenc += dhw1 @ wa1.T
    return (dwi, dwf, dwo, dwc, dwa1, dwa2, dva, dwp, dbp,
            demb_rows, dhenc, dh_next, dm_next)
