"""Numba event loop. State lives in small arrays so a run can be resumed chunk by chunk."""
import numba
import numpy as np

# float state slots
F_T, F_GEN, F_PEND_GEN, F_SYNC, F_T0, F_BNEXT, F_BLEN = range(7)
N_FSTATE = 7
# int state slots
(I_X, I_EST, I_PEND, I_NDEL, I_NDEL_WIN, I_DONE, I_DOMINANCE, I_AOS_NE_AOII,
 I_NJUMP, I_ARMED, I_NLOG, I_BATCH) = range(12)
N_ISTATE = 12

JUMP, DELIVERY = 0, 1


@numba.njit(cache=True, nogil=True)
def _accumulate(acc, fs, is_, a, b, horizon, aos_a, aoii_a, aoi_a, matched):
    lo = max(a, fs[F_T0])
    hi = min(b, horizon)
    if hi <= lo:
        return
    shift = lo - a
    aoi = aoi_a + shift
    aos = 0.0
    aoii = 0.0
    if not matched:
        aos = aos_a + shift
        aoii = aoii_a + shift
    nb = acc.shape[0]
    s = lo
    while s < hi:
        k = is_[I_BATCH]
        e = hi
        if k < nb - 1 and fs[F_BNEXT] < hi:
            e = fs[F_BNEXT]
        d = e - s
        half = 0.5 * d * d
        if matched:
            acc[k, 3] += d
        else:
            acc[k, 0] += aos * d + half
            acc[k, 1] += aoii * d + half
            aos += d
            aoii += d
        acc[k, 2] += aoi * d + half
        acc[k, 4] += d
        aoi += d
        if k < nb - 1 and e == fs[F_BNEXT]:
            is_[I_BATCH] = k + 1
            fs[F_BNEXT] = fs[F_T0] + (k + 2) * fs[F_BLEN]
        s = e


@numba.njit(cache=True, nogil=True)
def _check(fs, is_, le, t):
    x = is_[I_X]
    est = is_[I_EST]
    if est < 0:
        return
    if x == est:
        aos = 0.0
        aoii = 0.0
    else:
        aos = t - le[est]
        aoii = t - fs[F_SYNC]
    if aos > t - fs[F_GEN]:
        is_[I_DOMINANCE] += 1
    if aos != aoii:
        is_[I_AOS_NE_AOII] += 1


@numba.njit(cache=True, nogil=True)
def run_chunk(exps, u_kind, u_jump, n, sigma, lam, horizon, warm_t, warm_k,
              fs, is_, le, acc, log_t, log_k, log_v, log_g, record):
    """Advance the simulation using one chunk of pre-drawn variates.

    Returns the number of variates consumed; sets ``is_[I_DONE]`` once the
    horizon is reached.
    """
    rate = sigma + lam
    p_jump = sigma / rate
    nb = acc.shape[0]
    for i in range(exps.size):
        t = fs[F_T]
        tn = t + exps[i] / rate
        x = is_[I_X]
        est = is_[I_EST]
        if is_[I_ARMED] == 1:
            matched = x == est
            aos_a = 0.0
            aoii_a = 0.0
            if not matched:
                aos_a = t - le[est]
                aoii_a = t - fs[F_SYNC]
            _accumulate(acc, fs, is_, t, tn, horizon, aos_a, aoii_a, t - fs[F_GEN], matched)
        if tn >= horizon:
            fs[F_T] = horizon
            is_[I_DONE] = 1
            return i + 1
        fs[F_T] = tn
        t = tn
        _check(fs, is_, le, t)
        if u_kind[i] < p_jump:
            off = 1 + int(u_jump[i] * (n - 1))
            if off > n - 1:
                off = n - 1
            le[x] = t
            if x == est:
                fs[F_SYNC] = t
            x = (x + off) % n
            is_[I_X] = x
            is_[I_NJUMP] += 1
            kind = JUMP
            val = x
            gen = np.nan
        else:
            new_est = is_[I_PEND]
            gen = fs[F_PEND_GEN]
            if new_est != x:
                if est < 0:
                    # estimate is extended backwards before the first delivery
                    fs[F_SYNC] = le[new_est]
                elif x == est:
                    fs[F_SYNC] = t
            is_[I_EST] = new_est
            fs[F_GEN] = gen
            is_[I_PEND] = x
            fs[F_PEND_GEN] = t
            is_[I_NDEL] += 1
            if is_[I_ARMED] == 1 and t >= fs[F_T0]:
                is_[I_NDEL_WIN] += 1
            if is_[I_ARMED] == 0 and is_[I_NDEL] >= warm_k:
                t0 = max(warm_t, t)
                is_[I_ARMED] = 1
                fs[F_T0] = t0
                fs[F_BLEN] = (horizon - t0) / nb
                fs[F_BNEXT] = t0 + fs[F_BLEN]
                is_[I_BATCH] = 0
                if t0 == t:
                    is_[I_NDEL_WIN] += 1
            kind = DELIVERY
            val = new_est
        if record:
            j = is_[I_NLOG]
            log_t[j] = t
            log_k[j] = kind
            log_v[j] = val
            log_g[j] = gen
            is_[I_NLOG] = j + 1
        _check(fs, is_, le, t)
    return exps.size
