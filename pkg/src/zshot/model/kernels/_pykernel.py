"""Fused per-example loss and gradient, vectorised numpy fallback.

Forward pass identical to :mod:`zshot.model.network`; backward pass derived
by hand. The compiled kernel implements the same arithmetic in typed loops.
"""

from __future__ import annotations

import numpy as np


def _sig(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(x):
    z = np.exp(x - x.max())
    return z / z.sum()


def _lse(x):
    m = x.max()
    return m + np.log(np.exp(x - m).sum())


def _lstm_forward(Wx, Wh, b, xs, k):
    """Run the recurrence over ``xs``; returns per-step caches."""
    steps = len(xs)
    H = np.zeros((steps, k))
    C = np.zeros((steps, k))
    U = np.zeros((steps, k))
    I = np.zeros((steps, k))
    O = np.zeros((steps, k))
    h = np.zeros(k)
    c = np.zeros(k)
    for t in range(steps):
        a = Wx @ xs[t] + Wh @ h + b
        u = np.tanh(a[:k])
        i = _sig(a[k : 2 * k])
        o = _sig(a[2 * k :])
        c = c + i * u
        h = o * np.tanh(c)
        H[t], C[t], U[t], I[t], O[t] = h, c, u, i, o
    return H, C, U, I, O


def _lstm_backward(Wx, Wh, xs, cache, dH, gWx, gWh, gb, dx_out, k, dh0=None):
    """Backpropagate ``dH`` (gradient w.r.t. each step's output).

    ``dh0`` is None for a zero initial state; otherwise the initial state
    array, and the gradient w.r.t. it is returned.
    """
    H, C, U, I, O = cache
    steps = len(xs)
    dh_next = np.zeros(k)
    dc_next = np.zeros(k)
    for t in range(steps - 1, -1, -1):
        dh = dH[t] + dh_next
        tc = np.tanh(C[t])
        do = dh * tc
        dc = dc_next + dh * O[t] * (1.0 - tc * tc)
        di = dc * U[t]
        du = dc * I[t]
        da = np.concatenate([du * (1.0 - U[t] ** 2), di * I[t] * (1.0 - I[t]), do * O[t] * (1.0 - O[t])])
        h_prev = H[t - 1] if t > 0 else (dh0 if dh0 is not None else np.zeros(k))
        gWx += np.outer(da, xs[t])
        gWh += np.outer(da, h_prev)
        gb += da
        dx_out[t] += Wx.T @ da
        dh_next = Wh.T @ da
        dc_next = dc
    return dh_next


class PyKernel:
    """Loss and gradient of one example for a fixed parameter layout."""

    name = "numpy"

    def __init__(self, layout):
        self.layout = layout
        self.d = layout["enc_fwd_Wh"].shape[1]
        self.E = layout["embed"].shape[1]
        self.V = layout["embed"].shape[0]
        self.K = layout["domain_W"].shape[0]

    def _views(self, flat):
        return {s.name: flat[s.offset : s.stop].reshape(s.shape) for s in self.layout.segments}

    def loss_and_grad(self, values, ex, grad_out, reg_weight=0.5, final_reg=False):
        """Return the loss of ``ex`` and write its gradient into ``grad_out``."""
        P = self._views(values)
        grad_out[:] = 0.0
        G = self._views(grad_out)
        d, V, K = self.d, self.V, self.K
        D = 2 * d
        n, m = ex.n, ex.m

        emb = P["embed"]
        xs = emb[ex.src]
        fwd = _lstm_forward(P["enc_fwd_Wx"], P["enc_fwd_Wh"], P["enc_fwd_b"], xs, d)
        bwd_r = _lstm_forward(P["enc_bwd_Wx"], P["enc_bwd_Wh"], P["enc_bwd_b"], xs[::-1], d)
        Hs = np.concatenate([fwd[0], bwd_r[0][::-1]], axis=1)  # (n, 2d)
        z0 = np.concatenate([fwd[0][-1], bwd_r[0][-1]])
        s0 = np.tanh(P["dec_init_W"] @ z0)

        Wa = P["attn_W"]
        Ut = P["out_U"]
        WT = P["domain_W"]
        y = np.zeros(K)
        y[ex.domain] = 1.0

        # encoder-side domain scores
        k0 = Wa.T @ s0
        e0 = Hs @ k0
        a0 = _softmax(e0)
        ctx0 = a0 @ Hs
        f0 = np.concatenate([z0, ctx0])
        q0 = _softmax(WT @ f0)

        # decoder
        dxs = emb[ex.dec_in]
        S = np.zeros((m, D))
        Cc = np.zeros((m, D))
        Ug = np.zeros((m, D))
        Ig = np.zeros((m, D))
        Og = np.zeros((m, D))
        ctxs = np.zeros((m, D))
        alphas = np.zeros((m, n))
        probs = []
        qs = np.zeros((m, K))
        loss = 0.0
        s, c = s0, np.zeros(D)
        Wdx, Wdh, bd = P["dec_Wx"], P["dec_Wh"], P["dec_b"]
        for j in range(m):
            a = Wdx @ dxs[j] + Wdh @ s + bd
            u = np.tanh(a[:D])
            i = _sig(a[D : 2 * D])
            o = _sig(a[2 * D :])
            c = c + i * u
            s = o * np.tanh(c)
            S[j], Cc[j], Ug[j], Ig[j], Og[j] = s, c, u, i, o
            e = Hs @ (Wa.T @ s)
            al = _softmax(e)
            ctx = al @ Hs
            alphas[j], ctxs[j] = al, ctx
            f = np.concatenate([s, ctx])
            logits = np.concatenate([Ut @ f, e])
            lse_all = _lse(logits)
            gold = ex.gold[j]
            lse_gold = _lse(logits[gold])
            loss += lse_all - lse_gold
            p = np.exp(logits - lse_all)
            pg = np.zeros_like(p)
            pg[gold] = np.exp(logits[gold] - lse_gold)
            probs.append(p - pg)  # d loss / d logits
            qs[j] = _softmax(WT @ f)

        if final_reg:
            qbar = qs[-1]
        else:
            qbar = qs.mean(axis=0)
        loss += reg_weight * np.sum((y - qbar) ** 2) + reg_weight * np.sum((y - q0) ** 2)

        # -- backward ------------------------------------------------------------------
        dHs = np.zeros((n, D))
        dS = np.zeros((m, D))
        dqbar = 2.0 * reg_weight * (qbar - y)
        for j in range(m):
            f = np.concatenate([S[j], ctxs[j]])
            dlog = probs[j]
            G["out_U"] += np.outer(dlog[:V], f)
            df = Ut.T @ dlog[:V]
            de = dlog[V:].copy()
            if final_reg:
                dq = dqbar if j == m - 1 else None
            else:
                dq = dqbar / m
            if dq is not None:
                q = qs[j]
                dr = q * (dq - q @ dq)
                G["domain_W"] += np.outer(dr, f)
                df += WT.T @ dr
            dctx = df[D:]
            ds = df[:D]
            al = alphas[j]
            dal = Hs @ dctx
            dHs += np.outer(al, dctx)
            de += al * (dal - al @ dal)
            key = Wa.T @ S[j]
            dHs += np.outer(de, key)
            dkey = Hs.T @ de
            G["attn_W"] += np.outer(S[j], dkey)
            ds += Wa @ dkey
            dS[j] = ds

        # encoder-side regulariser
        dq0 = 2.0 * reg_weight * (q0 - y)
        dr0 = q0 * (dq0 - q0 @ dq0)
        G["domain_W"] += np.outer(dr0, f0)
        df0 = WT.T @ dr0
        dz0 = df0[:D].copy()
        dctx0 = df0[D:]
        dal0 = Hs @ dctx0
        dHs += np.outer(a0, dctx0)
        de0 = a0 * (dal0 - a0 @ dal0)
        dHs += np.outer(de0, k0)
        dk0 = Hs.T @ de0
        G["attn_W"] += np.outer(s0, dk0)
        ds0 = Wa @ dk0

        # decoder recurrence
        dxd = np.zeros((m, self.E))
        ds0 += _lstm_backward(
            Wdx, Wdh, dxs, (S, Cc, Ug, Ig, Og), dS, G["dec_Wx"], G["dec_Wh"], G["dec_b"], dxd, D, dh0=s0
        )
        np.add.at(G["embed"], ex.dec_in, dxd)

        # initial decoder state
        dpre = ds0 * (1.0 - s0 * s0)
        G["dec_init_W"] += np.outer(dpre, z0)
        dz0 += P["dec_init_W"].T @ dpre

        # encoder
        dHf = dHs[:, :d].copy()
        dHb = dHs[:, d:][::-1].copy()  # in backward-processing order
        dHf[-1] += dz0[:d]
        dHb[-1] += dz0[d:]
        dxf = np.zeros((n, self.E))
        dxb = np.zeros((n, self.E))
        _lstm_backward(P["enc_fwd_Wx"], P["enc_fwd_Wh"], xs, fwd, dHf, G["enc_fwd_Wx"], G["enc_fwd_Wh"], G["enc_fwd_b"], dxf, d)
        _lstm_backward(
            P["enc_bwd_Wx"], P["enc_bwd_Wh"], xs[::-1], bwd_r, dHb, G["enc_bwd_Wx"], G["enc_bwd_Wh"], G["enc_bwd_b"], dxb, d
        )
        np.add.at(G["embed"], ex.src, dxf + dxb[::-1])
        return float(loss)
