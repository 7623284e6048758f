"""Compiled numerical kernels.

Everything here is nopython-compiled and releases the GIL, so ensembles can
run one integration per thread.  No kernel allocates per step, no kernel
uses fastmath; results are bit-reproducible for identical inputs.

Two independent integration routes live side by side on purpose:

* ``adaptive_loop``: embedded Dormand-Prince 5(4) pair, PI step control,
  FSAL, order-4 continuous extension for sampling, cubic Hermite bisection
  for threshold events.
* ``rk4_loop``: classical fixed-step 4th-order Runge-Kutta, recording every
  step.  It shares only the right-hand-side kernels with the adaptive
  route and is used to cross-check it.

Termination codes used by both loops: 0 = reached t_end, 1 = scaled sup
crossed the blowup threshold, 2 = step size underflow (the non-finite flag
tells the two underflow causes apart).
"""

import numpy as np
from numba import njit

# --- Dormand-Prince 5(4) tableau -------------------------------------------

A21 = 1.0 / 5.0
A31 = 3.0 / 40.0
A32 = 9.0 / 40.0
A41 = 44.0 / 45.0
A42 = -56.0 / 15.0
A43 = 32.0 / 9.0
A51 = 19372.0 / 6561.0
A52 = -25360.0 / 2187.0
A53 = 64448.0 / 6561.0
A54 = -212.0 / 729.0
A61 = 9017.0 / 3168.0
A62 = -355.0 / 33.0
A63 = 46732.0 / 5247.0
A64 = 49.0 / 176.0
A65 = -5103.0 / 18656.0
# 5th-order solution weights (also the 7th stage row: FSAL)
B1 = 35.0 / 384.0
B3 = 500.0 / 1113.0
B4 = 125.0 / 192.0
B5 = -2187.0 / 6784.0
B6 = 11.0 / 84.0
# difference between the 5th- and embedded 4th-order weights
E1 = 71.0 / 57600.0
E3 = -71.0 / 16695.0
E4 = 71.0 / 1920.0
E5 = -17253.0 / 339200.0
E6 = 22.0 / 525.0
E7 = -1.0 / 40.0
# order-4 continuous extension
D1 = -12715105075.0 / 11282082432.0
D3 = 87487479700.0 / 32700410799.0
D4 = -10690763975.0 / 1880347072.0
D5 = 701980252875.0 / 199316789632.0
D6 = -1453857185.0 / 822651844.0
D7 = 69997945.0 / 29380423.0

# PI controller, Hairer's constants: exponent 0.2 - 0.75*beta with beta=0.04
SAFETY = 0.9
EXPO1 = 0.17
PI_BETA = 0.04
FAC_MIN = 0.2  # strongest shrink per step
FAC_MAX = 5.0  # strongest growth per step

MODE_LADDER = 0
MODE_TREE = 1

TERM_T_END = 0
TERM_BLOWUP = 1
TERM_UNDERFLOW = 2


@njit(cache=True, nogil=True)
def rhs_linear(alpha, beta, lam, u, out):
    """Nearest-neighbour ladder coupling; lam[j] holds lam**j, u[-1]=u[N]=0."""
    n = u.shape[0]
    for j in range(n):
        um1 = u[j - 1] if j > 0 else 0.0
        up1 = u[j + 1] if j + 1 < n else 0.0
        uj = u[j]
        out[j] = alpha * (lam[j] * um1 * um1 - lam[j + 1] * uj * up1) + beta * (
            lam[j] * uj * um1 - lam[j + 1] * up1 * up1
        )


@njit(cache=True, nogil=True)
def rhs_tree(alpha, beta, lam, level, d, u, out):
    """d-ary tree coupling in level order.

    Node i sits at generation level[i]; its parent is (i-1)//d and its
    children are d*i+1 .. d*i+d when present.  The root has no parent and
    the deepest generation has no children, which closes the system.  The
    operation order matches rhs_linear so that d = 1 reproduces the ladder
    bit for bit.
    """
    n = u.shape[0]
    for i in range(n):
        g = level[i]
        up = u[(i - 1) // d] if i > 0 else 0.0
        ui = u[i]
        cs = 0.0  # sum of child amplitudes
        cq = 0.0  # sum of squared child amplitudes
        c0 = d * i + 1
        c1 = c0 + d
        if c1 > n:
            c1 = n
        for c in range(c0, c1):
            cs += u[c]
            cq += u[c] * u[c]
        out[i] = alpha * (lam[g] * up * up - lam[g + 1] * ui * cs) + beta * (
            lam[g] * ui * up - lam[g + 1] * cq
        )


@njit(cache=True, nogil=True)
def _eval_rhs(mode, alpha, beta, lam, level, d, u, out):
    if mode == MODE_LADDER:
        rhs_linear(alpha, beta, lam, u, out)
    else:
        rhs_tree(alpha, beta, lam, level, d, u, out)


@njit(cache=True, nogil=True)
def _hermite(y0, f0, y1, f1, h, th):
    """Cubic Hermite interpolant on one step, evaluated at fraction th."""
    th2 = th * th
    th3 = th2 * th
    return (
        (2.0 * th3 - 3.0 * th2 + 1.0) * y0
        + (th3 - 2.0 * th2 + th) * (h * f0)
        + (-2.0 * th3 + 3.0 * th2) * y1
        + (th3 - th2) * (h * f1)
    )


@njit(cache=True, nogil=True)
def _first_crossing_theta(y0, f0, y1, f1, h, thr):
    """Bisect the Hermite interpolant for the upward crossing of thr.

    Assumes y0 < thr <= y1.  Returns the left edge of a 2**-60 wide
    bracket, as a fraction of the step.  If the interpolant wiggles
    through the threshold more than once inside a single accepted step,
    one of the crossings is returned; at integration tolerances this
    distinction is below the step error.
    """
    lo = 0.0
    hi = 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _hermite(y0, f0, y1, f1, h, mid) >= thr:
            hi = mid
        else:
            lo = mid
    return hi


@njit(cache=True, nogil=True)
def _scaled_sup(w, y):
    """max_i w[i]*y[i], signed (no absolute value)."""
    m = w[0] * y[0]
    for i in range(1, y.shape[0]):
        v = w[i] * y[i]
        if v > m:
            m = v
    return m


@njit(cache=True, nogil=True)
def adaptive_loop(
    mode,
    alpha,
    beta,
    lam,
    level,
    d,
    u0,
    t0,
    t_end,
    rtol,
    atol,
    dt_init,
    dt_min,
    blowup_threshold,
    w_sup,
    h_s,
    ev_idx,
    ev_thr,
    out_ts,
    out_us,
    ev_j_out,
    ev_t_out,
):
    """Embedded 5(4) integration from (t0, u0) to t_end.

    Samples land on the fixed grid t0 + k*h_s via the continuous
    extension, plus the initial and terminal states.  Events are first
    upward crossings of ev_thr[e] by component ev_idx[e], located by
    bisection on the cubic Hermite of the accepted step.

    Returns (n_samples, n_events, term, nonfinite, n_accepted,
    n_rejected, last_dt, sup_integral, t_final).
    """
    n = u0.shape[0]
    cap = out_ts.shape[0]
    ev_n = ev_idx.shape[0]

    y = u0.copy()
    y_new = np.empty(n, np.float64)
    ytmp = np.empty(n, np.float64)
    k1 = np.empty(n, np.float64)
    k2 = np.empty(n, np.float64)
    k3 = np.empty(n, np.float64)
    k4 = np.empty(n, np.float64)
    k5 = np.empty(n, np.float64)
    k6 = np.empty(n, np.float64)
    k7 = np.empty(n, np.float64)
    rc1 = np.empty(n, np.float64)
    rc2 = np.empty(n, np.float64)
    rc3 = np.empty(n, np.float64)
    rc4 = np.empty(n, np.float64)
    rc5 = np.empty(n, np.float64)
    ev_done = np.zeros(ev_n, np.bool_)
    tmp_th = np.empty(ev_n, np.float64)
    tmp_e = np.empty(ev_n, np.int64)

    t = t0
    dt = dt_init
    err_prev = 1.0e-4
    n_acc = 0
    n_rej = 0
    last_dt = 0.0
    n_ev = 0
    nonfinite = 0
    nf_last_reject = False
    term = -1
    t_final = t

    sup_prev = _scaled_sup(w_sup, y)
    sup_integral = 0.0

    n_s = 0
    out_ts[n_s] = t0
    for i in range(n):
        out_us[n_s, i] = y[i]
    n_s += 1
    kk = 1  # next sample index on the cadence grid

    _eval_rhs(mode, alpha, beta, lam, level, d, y, k1)

    if sup_prev >= blowup_threshold:
        # the initial state already sits beyond the threshold
        term = TERM_BLOWUP
        t_final = t0

    while term < 0 and t < t_end:
        if dt < dt_min:
            term = TERM_UNDERFLOW
            if nf_last_reject:
                nonfinite = 1
            t_final = t
            break
        last_step = t + dt >= t_end
        h = t_end - t if last_step else dt
        if t + h == t:
            # h has shrunk below the resolution of t itself
            term = TERM_UNDERFLOW
            if nf_last_reject:
                nonfinite = 1
            t_final = t
            break

        for i in range(n):
            ytmp[i] = y[i] + h * (A21 * k1[i])
        _eval_rhs(mode, alpha, beta, lam, level, d, ytmp, k2)
        for i in range(n):
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        _eval_rhs(mode, alpha, beta, lam, level, d, ytmp, k3)
        for i in range(n):
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        _eval_rhs(mode, alpha, beta, lam, level, d, ytmp, k4)
        for i in range(n):
            ytmp[i] = y[i] + h * (
                A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]
            )
        _eval_rhs(mode, alpha, beta, lam, level, d, ytmp, k5)
        for i in range(n):
            ytmp[i] = y[i] + h * (
                A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]
            )
        _eval_rhs(mode, alpha, beta, lam, level, d, ytmp, k6)
        for i in range(n):
            y_new[i] = y[i] + h * (
                B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]
            )
        _eval_rhs(mode, alpha, beta, lam, level, d, y_new, k7)

        err = 0.0
        has_nan = False
        for i in range(n):
            e = h * (
                E1 * k1[i]
                + E3 * k3[i]
                + E4 * k4[i]
                + E5 * k5[i]
                + E6 * k6[i]
                + E7 * k7[i]
            )
            ay = abs(y[i])
            ayn = abs(y_new[i])
            sc = atol + rtol * (ay if ay > ayn else ayn)
            q = abs(e) / sc
            if q != q:
                has_nan = True
            elif q > err:
                err = q
        if has_nan:
            err = np.inf

        if err <= 1.0:
            # accepted
            n_acc += 1
            last_dt = h
            nf_last_reject = False
            t_new = t_end if last_step else t + h

            if ev_n > 0:
                m = 0
                for e in range(ev_n):
                    if not ev_done[e]:
                        j = ev_idx[e]
                        thr = ev_thr[e]
                        if y[j] < thr and y_new[j] >= thr:
                            tmp_th[m] = _first_crossing_theta(
                                y[j], k1[j], y_new[j], k7[j], h, thr
                            )
                            tmp_e[m] = e
                            m += 1
                # chronological order inside the step; ties keep level order
                for a in range(1, m):
                    th_a = tmp_th[a]
                    e_a = tmp_e[a]
                    b = a - 1
                    while b >= 0 and tmp_th[b] > th_a:
                        tmp_th[b + 1] = tmp_th[b]
                        tmp_e[b + 1] = tmp_e[b]
                        b -= 1
                    tmp_th[b + 1] = th_a
                    tmp_e[b + 1] = e_a
                for a in range(m):
                    e = tmp_e[a]
                    ev_done[e] = True
                    ev_j_out[n_ev] = ev_idx[e]
                    ev_t_out[n_ev] = t + tmp_th[a] * h
                    n_ev += 1

            t_s = t0 + kk * h_s
            if t_s <= t_new:
                for i in range(n):
                    ydiff = y_new[i] - y[i]
                    bspl = h * k1[i] - ydiff
                    rc1[i] = y[i]
                    rc2[i] = ydiff
                    rc3[i] = bspl
                    rc4[i] = ydiff - h * k7[i] - bspl
                    rc5[i] = h * (
                        D1 * k1[i]
                        + D3 * k3[i]
                        + D4 * k4[i]
                        + D5 * k5[i]
                        + D6 * k6[i]
                        + D7 * k7[i]
                    )
                while t_s <= t_new and n_s < cap:
                    if t_s == t_new:
                        for i in range(n):
                            out_us[n_s, i] = y_new[i]
                    else:
                        th = (t_s - t) / h
                        th1 = 1.0 - th
                        for i in range(n):
                            out_us[n_s, i] = rc1[i] + th * (
                                rc2[i] + th1 * (rc3[i] + th * (rc4[i] + th1 * rc5[i]))
                            )
                    out_ts[n_s] = t_s
                    n_s += 1
                    kk += 1
                    t_s = t0 + kk * h_s

            sup_new = _scaled_sup(w_sup, y_new)
            sup_integral += 0.5 * (sup_prev + sup_new) * h
            sup_prev = sup_new

            tmp = y
            y = y_new
            y_new = tmp
            tmp = k1
            k1 = k7
            k7 = tmp
            t = t_new

            if sup_new >= blowup_threshold:
                term = TERM_BLOWUP
                t_final = t
                break
            if last_step:
                term = TERM_T_END
                t_final = t
                break

            fac = err ** EXPO1 / (err_prev ** PI_BETA) / SAFETY
            if fac < 1.0 / FAC_MAX:
                fac = 1.0 / FAC_MAX
            elif fac > 1.0 / FAC_MIN:
                fac = 1.0 / FAC_MIN
            dt = h / fac
            err_prev = err if err > 1.0e-4 else 1.0e-4
        else:
            # rejected
            n_rej += 1
            nf_last_reject = not np.isfinite(err)
            fac = err ** EXPO1 / SAFETY
            if fac > 1.0 / FAC_MIN:
                fac = 1.0 / FAC_MIN
            dt = h / fac

    if term < 0:
        term = TERM_T_END
        t_final = t

    if n_s < cap and (n_s == 0 or out_ts[n_s - 1] != t_final):
        out_ts[n_s] = t_final
        for i in range(n):
            out_us[n_s, i] = y[i]
        n_s += 1

    return (n_s, n_ev, term, nonfinite, n_acc, n_rej, last_dt, sup_integral, t_final)


@njit(cache=True, nogil=True)
def rk4_loop(
    mode,
    alpha,
    beta,
    lam,
    level,
    d,
    u0,
    t0,
    t_end,
    dt,
    n_full,
    rem,
    w_sup,
    ev_thr,
    out_ts,
    out_us,
    ev_j_out,
    ev_t_out,
):
    """Classical fixed-step RK4 from (t0, u0) to t_end, recording every step.

    Grid times are t0 + k*dt with one trailing partial step of size rem
    when the interval is not an exact multiple.  Events are first upward
    crossings of ev_thr[j] by component j (pass an empty ev_thr to skip),
    located only to within one step and recorded at the step end.

    Returns the same tuple layout as adaptive_loop.
    """
    n = u0.shape[0]
    ev_all = ev_thr.shape[0]

    y = u0.copy()
    y_new = np.empty(n, np.float64)
    ytmp = np.empty(n, np.float64)
    k1 = np.empty(n, np.float64)
    k2 = np.empty(n, np.float64)
    k3 = np.empty(n, np.float64)
    k4 = np.empty(n, np.float64)
    ev_done = np.zeros(ev_all, np.bool_)

    n_s = 0
    out_ts[n_s] = t0
    for i in range(n):
        out_us[n_s, i] = y[i]
    n_s += 1

    sup_prev = _scaled_sup(w_sup, y)
    sup_integral = 0.0
    n_ev = 0
    nonfinite = 0
    term = TERM_T_END
    t = t0
    last_dt = 0.0
    n_done = 0

    n_total = n_full + (1 if rem > 0.0 else 0)
    for k in range(n_total):
        if k < n_full:
            h = dt
            t_next = t0 + (k + 1) * dt if k + 1 < n_total else t_end
        else:
            h = rem
            t_next = t_end

        _eval_rhs(mode, alpha, beta, lam, level, d, y, k1)
        for i in range(n):
            ytmp[i] = y[i] + (0.5 * h) * k1[i]
        _eval_rhs(mode, alpha, beta, lam, level, d, ytmp, k2)
        for i in range(n):
            ytmp[i] = y[i] + (0.5 * h) * k2[i]
        _eval_rhs(mode, alpha, beta, lam, level, d, ytmp, k3)
        for i in range(n):
            ytmp[i] = y[i] + h * k3[i]
        _eval_rhs(mode, alpha, beta, lam, level, d, ytmp, k4)
        for i in range(n):
            y_new[i] = y[i] + (h / 6.0) * (
                k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]
            )

        ok = True
        for i in range(n):
            if not np.isfinite(y_new[i]):
                ok = False
                break
        if not ok:
            term = TERM_UNDERFLOW
            nonfinite = 1
            break

        for j in range(ev_all):
            if not ev_done[j] and y[j] < ev_thr[j] and y_new[j] >= ev_thr[j]:
                ev_done[j] = True
                ev_j_out[n_ev] = j
                ev_t_out[n_ev] = t_next
                n_ev += 1

        sup_new = _scaled_sup(w_sup, y_new)
        sup_integral += 0.5 * (sup_prev + sup_new) * h
        sup_prev = sup_new

        tmp = y
        y = y_new
        y_new = tmp
        t = t_next
        last_dt = h
        n_done += 1

        out_ts[n_s] = t
        for i in range(n):
            out_us[n_s, i] = y[i]
        n_s += 1

    return (
        n_s,
        n_ev,
        term,
        nonfinite,
        n_done,
        0,
        last_dt,
        sup_integral,
        t,
    )
