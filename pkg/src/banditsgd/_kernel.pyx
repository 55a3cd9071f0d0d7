# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loop of the weighted averaged SGD recursion.

Mirrors ``banditsgd._kernel_py.run_steps`` operation for operation; the two
must stay in lockstep (see tests/test_backends.py).
"""
from libc.math cimport exp, sqrt, pow, isfinite

cdef enum:
    SQUARED = 0
    LOGISTIC = 1
    PINBALL = 2

cdef enum:
    VANILLA = 0
    IPW = 1
    SQRT_IPW = 2
    POWER = 3


cdef inline double _sigmoid(double z) nogil:
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    cdef double e = exp(z)
    return e / (1.0 + e)


cdef inline double _weight(int wkind, double gamma, double prob) nogil:
    if wkind == VANILLA:
        return 1.0
    elif wkind == IPW:
        return 1.0 / (2.0 * prob)
    elif wkind == SQRT_IPW:
        return sqrt(1.0 / (2.0 * prob))
    return pow(prob, gamma)


def run_steps(
    int model,
    double tau,
    const double[:, ::1] X,
    const double[:, ::1] Y,
    const double[::1] u_act,
    const long[::1] logged,
    const double[::1] eps,
    int wkind,
    double gamma,
    double eta0,
    double alpha,
    long meltdown,
    double[::1] theta,
    double[::1] theta_sum,
    double[:, ::1] S_sum,
    double[:, ::1] H_sum,
    long[::1] counts,
    double[::1] wext,
    bint accumulate,
    long stride,
    double[:, ::1] traj_theta,
    double[:, ::1] traj_bar,
    long[::1] traj_t,
    long[::1] traj_action,
    double[::1] traj_w,
    double[::1] traj_eta,
    long traj_pos,
):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef Py_ssize_t d = 2 * p
    cdef Py_ssize_t i, j, k, off
    cdef bint replay = logged.shape[0] > 0
    cdef long t0 = counts[0]
    cdef long t
    cdef long cap = traj_t.shape[0]
    cdef int a
    cdef double m0, m1, m, p0, prob, w, eta, y, coef, hcoef, step, e
    cdef double wsq, gw
    cdef long status = 0

    with nogil:
        for i in range(n):
            t = counts[0] + 1
            e = eps[t - t0 - 1]
            m0 = 0.0
            m1 = 0.0
            for j in range(p):
                m0 += X[i, j] * theta[j]
                m1 += X[i, j] * theta[p + j]
            p0 = e / 2.0
            if m0 > m1:
                p0 += 1.0 - e
            if u_act[i] < p0:
                a = 0
                prob = p0
            else:
                a = 1
                prob = 1.0 - p0
            if replay and a != logged[i]:
                counts[3] += 1
                continue

            counts[0] = t
            counts[1 + a] += 1
            off = a * p
            m = m1 if a == 1 else m0
            y = Y[i, a]
            w = _weight(wkind, gamma, prob)
            if w < wext[0]:
                wext[0] = w
            if w > wext[1]:
                wext[1] = w
            eta = eta0 * pow(<double>(t if t > meltdown else meltdown), -alpha)

            if model == SQUARED:
                coef = m - y
                hcoef = 1.0
            elif model == LOGISTIC:
                coef = -y * _sigmoid(-y * m)
                hcoef = _sigmoid(m) * _sigmoid(-m)
            else:
                coef = -(tau - (1.0 if y - m < 0 else 0.0))
                hcoef = 0.0

            for k in range(d):
                theta_sum[k] += theta[k]

            if accumulate:
                wsq = w * w * coef * coef
                for j in range(p):
                    for k in range(p):
                        S_sum[off + j, off + k] += wsq * X[i, j] * X[i, k]
                if model != PINBALL:
                    gw = w * hcoef
                    for j in range(p):
                        for k in range(p):
                            H_sum[off + j, off + k] += gw * X[i, j] * X[i, k]

            step = eta * w * coef
            for j in range(p):
                theta[off + j] -= step * X[i, j]
            if not isfinite(step):
                status = t
            for j in range(p):
                if not isfinite(theta[off + j]):
                    status = t
            if status != 0:
                break

            if stride > 0 and t % stride == 0 and traj_pos < cap:
                for k in range(d):
                    traj_theta[traj_pos, k] = theta[k]
                    traj_bar[traj_pos, k] = theta_sum[k] / t
                traj_t[traj_pos] = t
                traj_action[traj_pos] = a
                traj_w[traj_pos] = w
                traj_eta[traj_pos] = eta
                traj_pos += 1
    return status, traj_pos
