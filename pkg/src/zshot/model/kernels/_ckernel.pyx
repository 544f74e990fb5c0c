# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled fused loss/gradient kernel.

Same arithmetic as ``_pykernel.PyKernel`` written as typed loops over the
flat parameter buffer; used for training, where per-example Python overhead
would otherwise dominate at the small hidden sizes this model runs with.
"""

import numpy as np

from libc.math cimport exp, log, tanh
from libc.string cimport memcpy, memset

ctypedef double* dptr


cdef inline double _sig(double x) noexcept nogil:
    return 0.5 * (1.0 + tanh(0.5 * x))


cdef inline void _matvec(const double* W, Py_ssize_t rows, Py_ssize_t cols,
                         const double* x, double* y) noexcept nogil:
    # y += W x
    cdef Py_ssize_t r, c
    cdef double acc
    for r in range(rows):
        acc = 0.0
        for c in range(cols):
            acc += W[r * cols + c] * x[c]
        y[r] += acc


cdef inline void _matTvec(const double* W, Py_ssize_t rows, Py_ssize_t cols,
                          const double* x, double* y) noexcept nogil:
    # y += W' x
    cdef Py_ssize_t r, c
    cdef double xr
    for r in range(rows):
        xr = x[r]
        if xr == 0.0:
            continue
        for c in range(cols):
            y[c] += W[r * cols + c] * xr


cdef inline void _outer(double* G, Py_ssize_t rows, Py_ssize_t cols,
                        const double* a, const double* b) noexcept nogil:
    # G += a b'
    cdef Py_ssize_t r, c
    cdef double ar
    for r in range(rows):
        ar = a[r]
        if ar == 0.0:
            continue
        for c in range(cols):
            G[r * cols + c] += ar * b[c]


cdef inline double _dot(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(n):
        acc += a[i] * b[i]
    return acc


cdef inline double _softmax(const double* x, Py_ssize_t n, double* out) noexcept nogil:
    # writes softmax into out, returns log-sum-exp
    cdef Py_ssize_t i
    cdef double m = x[0], z = 0.0
    for i in range(1, n):
        if x[i] > m:
            m = x[i]
    for i in range(n):
        out[i] = exp(x[i] - m)
        z += out[i]
    for i in range(n):
        out[i] /= z
    return m + log(z)


cdef void _lstm_forward(const double* Wx, const double* Wh, const double* b,
                        const double* emb, Py_ssize_t E, const long long* ids,
                        Py_ssize_t steps, bint rev, Py_ssize_t k, const double* h0,
                        double* H, double* C, double* U, double* I, double* O,
                        double* a) noexcept nogil:
    cdef Py_ssize_t t, r, pos
    cdef const double* h_prev
    cdef double c_prev
    for t in range(steps):
        pos = steps - 1 - t if rev else t
        for r in range(3 * k):
            a[r] = b[r]
        _matvec(Wx, 3 * k, E, emb + ids[pos] * E, a)
        if t > 0:
            _matvec(Wh, 3 * k, k, H + (t - 1) * k, a)
        elif h0 != NULL:
            _matvec(Wh, 3 * k, k, h0, a)
        for r in range(k):
            U[t * k + r] = tanh(a[r])
            I[t * k + r] = _sig(a[k + r])
            O[t * k + r] = _sig(a[2 * k + r])
            c_prev = C[(t - 1) * k + r] if t > 0 else 0.0
            C[t * k + r] = c_prev + I[t * k + r] * U[t * k + r]
            H[t * k + r] = O[t * k + r] * tanh(C[t * k + r])


cdef void _lstm_backward(const double* Wx, const double* Wh, Py_ssize_t E,
                         const double* emb, const long long* ids, Py_ssize_t steps, bint rev,
                         Py_ssize_t k, const double* h0,
                         const double* H, const double* C, const double* U,
                         const double* I, const double* O, const double* dH,
                         double* gWx, double* gWh, double* gb, double* gEmb,
                         double* dh0_out, double* dh, double* dc, double* da) noexcept nogil:
    cdef Py_ssize_t t, r, pos
    cdef double tc, do_, dcr, u, ig, o
    cdef const double* h_prev
    memset(dh, 0, k * sizeof(double))
    memset(dc, 0, k * sizeof(double))
    for t in range(steps - 1, -1, -1):
        pos = steps - 1 - t if rev else t
        for r in range(k):
            dh[r] += dH[t * k + r]
            tc = tanh(C[t * k + r])
            u = U[t * k + r]
            ig = I[t * k + r]
            o = O[t * k + r]
            do_ = dh[r] * tc
            dcr = dc[r] + dh[r] * o * (1.0 - tc * tc)
            dc[r] = dcr
            da[r] = dcr * ig * (1.0 - u * u)
            da[k + r] = dcr * u * ig * (1.0 - ig)
            da[2 * k + r] = do_ * o * (1.0 - o)
        if t > 0:
            h_prev = H + (t - 1) * k
        else:
            h_prev = h0
        _outer(gWx, 3 * k, E, da, emb + ids[pos] * E)
        if h_prev != NULL:
            _outer(gWh, 3 * k, k, da, h_prev)
        for r in range(3 * k):
            gb[r] += da[r]
        _matTvec(Wx, 3 * k, E, da, gEmb + ids[pos] * E)
        memset(dh, 0, k * sizeof(double))
        _matTvec(Wh, 3 * k, k, da, dh)
    if dh0_out != NULL:
        for r in range(k):
            dh0_out[r] += dh[r]


cdef class CKernel:
    cdef public str name
    cdef public object layout
    cdef Py_ssize_t d, E, V, K
    cdef Py_ssize_t o_emb, o_fWx, o_fWh, o_fb, o_bWx, o_bWh, o_bb
    cdef Py_ssize_t o_init, o_dWx, o_dWh, o_db, o_attn, o_U, o_WT

    def __init__(self, layout):
        self.name = "compiled"
        self.layout = layout
        self.d = layout["enc_fwd_Wh"].shape[1]
        self.E = layout["embed"].shape[1]
        self.V = layout["embed"].shape[0]
        self.K = layout["domain_W"].shape[0]
        self.o_emb = layout["embed"].offset
        self.o_fWx = layout["enc_fwd_Wx"].offset
        self.o_fWh = layout["enc_fwd_Wh"].offset
        self.o_fb = layout["enc_fwd_b"].offset
        self.o_bWx = layout["enc_bwd_Wx"].offset
        self.o_bWh = layout["enc_bwd_Wh"].offset
        self.o_bb = layout["enc_bwd_b"].offset
        self.o_init = layout["dec_init_W"].offset
        self.o_dWx = layout["dec_Wx"].offset
        self.o_dWh = layout["dec_Wh"].offset
        self.o_db = layout["dec_b"].offset
        self.o_attn = layout["attn_W"].offset
        self.o_U = layout["out_U"].offset
        self.o_WT = layout["domain_W"].offset

    def loss_and_grad(self, const double[::1] values, ex, double[::1] grad_out,
                      double reg_weight=0.5, bint final_reg=False):
        cdef const long long[::1] src = np.ascontiguousarray(ex.src, dtype=np.int64)
        cdef const long long[::1] dec_in = np.ascontiguousarray(ex.dec_in, dtype=np.int64)
        cdef const long long[::1] gflat = ex.gold_flat
        cdef const long long[::1] gptr = ex.gold_ptr
        cdef Py_ssize_t dom = ex.domain
        cdef Py_ssize_t n = src.shape[0], m = dec_in.shape[0]
        cdef Py_ssize_t d = self.d, E = self.E, V = self.V, K = self.K
        cdef Py_ssize_t D = 2 * d, F = 4 * d, L = V + n
        if values.shape[0] != grad_out.shape[0]:
            raise ValueError("gradient buffer length mismatch")
        if dom < 0 or dom >= K:
            raise ValueError("example domain outside the model's domains")

        # scratch
        cdef double[::1] buf = np.zeros(
            5 * n * d * 2 + n * D * 2 + 5 * m * D + m * n + m * L + m * K
            + 6 * D + 2 * F + 4 * L + 3 * K + 2 * n + 8 * D + 3 * 3 * D + 3 * E,
            dtype=np.float64)
        cdef double* p = &buf[0]
        cdef dptr fH, fC, fU, fI, fO, bH, bC, bU, bI, bO, Hs, dHs, S, Cc, Ug, Ig, Og, alph, dlog, qs, z0, s0, key, ds0, ctx, dkey, feat, df, logits, prob, gbuf, de, q0, dq, dr, a0, dal, f0ctx, f0, dh, dc, dz0, dpre, da, gate, tmp3, xtmp
        fH = p; p += n * d
        fC = p; p += n * d
        fU = p; p += n * d
        fI = p; p += n * d
        fO = p; p += n * d
        bH = p; p += n * d
        bC = p; p += n * d
        bU = p; p += n * d
        bI = p; p += n * d
        bO = p; p += n * d
        Hs = p; p += n * D
        dHs = p; p += n * D
        S = p; p += m * D
        Cc = p; p += m * D
        Ug = p; p += m * D
        Ig = p; p += m * D
        Og = p; p += m * D
        alph = p; p += m * n
        dlog = p; p += m * L
        qs = p; p += m * K
        z0 = p; p += D
        s0 = p; p += D
        key = p; p += D
        ds0 = p; p += D
        ctx = p; p += D
        dkey = p; p += D
        feat = p; p += F
        df = p; p += F
        logits = p; p += L
        prob = p; p += L
        gbuf = p; p += L
        de = p; p += L
        q0 = p; p += K
        dq = p; p += K
        dr = p; p += K
        a0 = p; p += n
        dal = p; p += n
        f0ctx = p; p += D
        f0 = p; p += D * 2
        cdef double* dS
        dh = p; p += D
        dc = p; p += D
        dz0 = p; p += D
        dpre = p; p += D
        da = p; p += 3 * D
        gate = p; p += 3 * D
        tmp3 = p; p += 3 * D
        xtmp = p; p += 3 * E

        cdef const double* th = &values[0]
        cdef double* g = &grad_out[0]
        cdef const double* emb = th + self.o_emb
        cdef const double* Wa = th + self.o_attn
        cdef const double* Uo = th + self.o_U
        cdef const double* WT = th + self.o_WT
        cdef Py_ssize_t i, j, r, c, t, lo, hi
        cdef double loss = 0.0, lse_all, lse_gold, mx, z, w, acc, qdot
        # shared by the decoder (m x 2d) and both encoder directions (n x d)
        cdef double[::1] dS_arr = np.zeros(max(m * D, n * d), dtype=np.float64)
        dS = &dS_arr[0]

        memset(g, 0, values.shape[0] * sizeof(double))

        with nogil:
            # encoder
            _lstm_forward(th + self.o_fWx, th + self.o_fWh, th + self.o_fb, emb, E,
                          &src[0], n, False, d, NULL, fH, fC, fU, fI, fO, tmp3)
            _lstm_forward(th + self.o_bWx, th + self.o_bWh, th + self.o_bb, emb, E,
                          &src[0], n, True, d, NULL, bH, bC, bU, bI, bO, tmp3)
            for t in range(n):
                for r in range(d):
                    Hs[t * D + r] = fH[t * d + r]
                    Hs[t * D + d + r] = bH[(n - 1 - t) * d + r]
            for r in range(d):
                z0[r] = fH[(n - 1) * d + r]
                z0[d + r] = bH[(n - 1) * d + r]
            memset(s0, 0, D * sizeof(double))
            _matvec(th + self.o_init, D, D, z0, s0)
            for r in range(D):
                s0[r] = tanh(s0[r])

            # encoder-side domain scores
            memset(key, 0, D * sizeof(double))
            _matTvec(Wa, D, D, s0, key)
            for t in range(n):
                de[t] = _dot(Hs + t * D, key, D)
            _softmax(de, n, a0)
            memset(f0ctx, 0, D * sizeof(double))
            for t in range(n):
                for r in range(D):
                    f0ctx[r] += a0[t] * Hs[t * D + r]
            memcpy(f0, z0, D * sizeof(double))
            memcpy(f0 + D, f0ctx, D * sizeof(double))
            memset(dr, 0, K * sizeof(double))
            _matvec(WT, K, F, f0, dr)
            _softmax(dr, K, q0)

            # decoder forward
            for j in range(m):
                for r in range(3 * D):
                    gate[r] = th[self.o_db + r]
                _matvec(th + self.o_dWx, 3 * D, E, emb + dec_in[j] * E, gate)
                _matvec(th + self.o_dWh, 3 * D, D, (S + (j - 1) * D) if j > 0 else s0, gate)
                for r in range(D):
                    Ug[j * D + r] = tanh(gate[r])
                    Ig[j * D + r] = _sig(gate[D + r])
                    Og[j * D + r] = _sig(gate[2 * D + r])
                    Cc[j * D + r] = (Cc[(j - 1) * D + r] if j > 0 else 0.0) + Ig[j * D + r] * Ug[j * D + r]
                    S[j * D + r] = Og[j * D + r] * tanh(Cc[j * D + r])
                memset(key, 0, D * sizeof(double))
                _matTvec(Wa, D, D, S + j * D, key)
                for t in range(n):
                    logits[V + t] = _dot(Hs + t * D, key, D)
                _softmax(logits + V, n, alph + j * n)
                memset(ctx, 0, D * sizeof(double))
                for t in range(n):
                    for r in range(D):
                        ctx[r] += alph[j * n + t] * Hs[t * D + r]
                memcpy(feat, S + j * D, D * sizeof(double))
                memcpy(feat + D, ctx, D * sizeof(double))
                memset(logits, 0, V * sizeof(double))
                _matvec(Uo, V, F, feat, logits)
                lse_all = _softmax(logits, L, prob)
                lo = gptr[j]
                hi = gptr[j + 1]
                mx = logits[gflat[lo]]
                for i in range(lo + 1, hi):
                    if logits[gflat[i]] > mx:
                        mx = logits[gflat[i]]
                z = 0.0
                for i in range(lo, hi):
                    z += exp(logits[gflat[i]] - mx)
                lse_gold = mx + log(z)
                loss += lse_all - lse_gold
                for i in range(L):
                    dlog[j * L + i] = prob[i]
                for i in range(lo, hi):
                    dlog[j * L + gflat[i]] -= exp(logits[gflat[i]] - lse_gold)
                memset(dr, 0, K * sizeof(double))
                _matvec(WT, K, F, feat, dr)
                _softmax(dr, K, qs + j * K)

            # regularisers
            memset(dq, 0, K * sizeof(double))
            if final_reg:
                for c in range(K):
                    dq[c] = qs[(m - 1) * K + c]
            else:
                for j in range(m):
                    for c in range(K):
                        dq[c] += qs[j * K + c] / m
            for c in range(K):
                w = (1.0 if c == dom else 0.0)
                loss += reg_weight * ((w - dq[c]) * (w - dq[c]) + (w - q0[c]) * (w - q0[c]))
                dq[c] = 2.0 * reg_weight * (dq[c] - w)   # d loss / d qbar

            # decoder backward (output side)
            memset(dHs, 0, n * D * sizeof(double))
            for j in range(m):
                for r in range(D):
                    feat[r] = S[j * D + r]
                    ctx[r] = 0.0
                for t in range(n):
                    for r in range(D):
                        ctx[r] += alph[j * n + t] * Hs[t * D + r]
                memcpy(feat + D, ctx, D * sizeof(double))
                _outer(g + self.o_U, V, F, dlog + j * L, feat)
                memset(df, 0, F * sizeof(double))
                _matTvec(Uo, V, F, dlog + j * L, df)
                for t in range(n):
                    de[t] = dlog[j * L + V + t]
                if (not final_reg) or j == m - 1:
                    qdot = 0.0
                    for c in range(K):
                        qdot += qs[j * K + c] * dq[c]
                    for c in range(K):
                        dr[c] = qs[j * K + c] * (dq[c] - qdot)
                        if not final_reg:
                            dr[c] /= m
                    _outer(g + self.o_WT, K, F, dr, feat)
                    _matTvec(WT, K, F, dr, df)
                # attention context
                acc = 0.0
                for t in range(n):
                    dal[t] = _dot(Hs + t * D, df + D, D)
                    acc += alph[j * n + t] * dal[t]
                for t in range(n):
                    for r in range(D):
                        dHs[t * D + r] += alph[j * n + t] * df[D + r]
                    de[t] += alph[j * n + t] * (dal[t] - acc)
                memset(key, 0, D * sizeof(double))
                _matTvec(Wa, D, D, S + j * D, key)
                memset(dkey, 0, D * sizeof(double))
                for t in range(n):
                    for r in range(D):
                        dHs[t * D + r] += de[t] * key[r]
                        dkey[r] += Hs[t * D + r] * de[t]
                _outer(g + self.o_attn, D, D, S + j * D, dkey)
                for r in range(D):
                    dS[j * D + r] = df[r]
                _matvec(Wa, D, D, dkey, dS + j * D)

            # encoder-side regulariser
            for c in range(K):
                w = (1.0 if c == dom else 0.0)
                dq[c] = 2.0 * reg_weight * (q0[c] - w)
            qdot = 0.0
            for c in range(K):
                qdot += q0[c] * dq[c]
            for c in range(K):
                dr[c] = q0[c] * (dq[c] - qdot)
            _outer(g + self.o_WT, K, F, dr, f0)
            memset(df, 0, F * sizeof(double))
            _matTvec(WT, K, F, dr, df)
            memcpy(dz0, df, D * sizeof(double))
            acc = 0.0
            for t in range(n):
                dal[t] = _dot(Hs + t * D, df + D, D)
                acc += a0[t] * dal[t]
            memset(key, 0, D * sizeof(double))
            _matTvec(Wa, D, D, s0, key)
            memset(dkey, 0, D * sizeof(double))
            for t in range(n):
                de[t] = a0[t] * (dal[t] - acc)
                for r in range(D):
                    dHs[t * D + r] += a0[t] * df[D + r] + de[t] * key[r]
                    dkey[r] += Hs[t * D + r] * de[t]
            _outer(g + self.o_attn, D, D, s0, dkey)
            memset(ds0, 0, D * sizeof(double))
            _matvec(Wa, D, D, dkey, ds0)

            # decoder recurrence
            _lstm_backward(th + self.o_dWx, th + self.o_dWh, E, emb, &dec_in[0], m, False, D, s0,
                           S, Cc, Ug, Ig, Og, dS, g + self.o_dWx, g + self.o_dWh, g + self.o_db,
                           g + self.o_emb, ds0, dh, dc, da)

            # initial decoder state
            for r in range(D):
                dpre[r] = ds0[r] * (1.0 - s0[r] * s0[r])
            _outer(g + self.o_init, D, D, dpre, z0)
            _matTvec(th + self.o_init, D, D, dpre, dz0)

            # encoder recurrences; dH in processing order
            for t in range(n):
                for r in range(d):
                    dS[t * d + r] = dHs[t * D + r]
            for r in range(d):
                dS[(n - 1) * d + r] += dz0[r]
            _lstm_backward(th + self.o_fWx, th + self.o_fWh, E, emb, &src[0], n, False, d, NULL,
                           fH, fC, fU, fI, fO, dS, g + self.o_fWx, g + self.o_fWh, g + self.o_fb,
                           g + self.o_emb, NULL, dh, dc, da)
            for t in range(n):
                for r in range(d):
                    dS[t * d + r] = dHs[(n - 1 - t) * D + d + r]
            for r in range(d):
                dS[(n - 1) * d + r] += dz0[d + r]
            _lstm_backward(th + self.o_bWx, th + self.o_bWh, E, emb, &src[0], n, True, d, NULL,
                           bH, bC, bU, bI, bO, dS, g + self.o_bWx, g + self.o_bWh, g + self.o_bb,
                           g + self.o_emb, NULL, dh, dc, da)
        return loss
