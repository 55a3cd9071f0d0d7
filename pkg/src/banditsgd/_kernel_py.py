"""Pure-Python twin of the compiled kernel in ``_kernel.pyx``.

Same signature, same arithmetic order, same in-place mutation of the state
buffers. Roughly two orders of magnitude slower; used when the extension is
not built or when ``BANDITSGD_BACKEND=python`` is set.
"""
import math

SQUARED, LOGISTIC, PINBALL = 0, 1, 2
VANILLA, IPW, SQRT_IPW, POWER = 0, 1, 2, 3


def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _weight(wkind, gamma, prob):
    if wkind == VANILLA:
        return 1.0
    if wkind == IPW:
        return 1.0 / (2.0 * prob)
    if wkind == SQRT_IPW:
        return math.sqrt(1.0 / (2.0 * prob))
    return math.pow(prob, gamma)


def run_steps(
    model, tau, X, Y, u_act, logged, eps, wkind, gamma, eta0, alpha, meltdown,
    theta, theta_sum, S_sum, H_sum, counts, wext, accumulate, stride,
    traj_theta, traj_bar, traj_t, traj_action, traj_w, traj_eta, traj_pos,
):
    n, p = X.shape
    d = 2 * p
    replay = logged.shape[0] > 0
    t0 = int(counts[0])
    cap = traj_t.shape[0]
    status = 0
    # Work on Python lists: scalar numpy indexing is slower than list access.
    th = theta.tolist()
    tsum = theta_sum.tolist()
    Xl = X.tolist()
    for i in range(n):
        t = int(counts[0]) + 1
        e = float(eps[t - t0 - 1])
        x = Xl[i]
        m0 = 0.0
        m1 = 0.0
        for j in range(p):
            m0 += x[j] * th[j]
            m1 += x[j] * th[p + j]
        p0 = e / 2.0
        if m0 > m1:
            p0 += 1.0 - e
        if u_act[i] < p0:
            a, prob = 0, p0
        else:
            a, prob = 1, 1.0 - p0
        if replay and a != logged[i]:
            counts[3] += 1
            continue

        counts[0] = t
        counts[1 + a] += 1
        off = a * p
        m = m1 if a == 1 else m0
        y = float(Y[i, a])
        w = _weight(wkind, gamma, prob)
        if w < wext[0]:
            wext[0] = w
        if w > wext[1]:
            wext[1] = w
        eta = eta0 * math.pow(float(max(t, meltdown)), -alpha)

        if model == SQUARED:
            coef, hcoef = m - y, 1.0
        elif model == LOGISTIC:
            coef, hcoef = -y * _sigmoid(-y * m), _sigmoid(m) * _sigmoid(-m)
        else:
            coef, hcoef = -(tau - (1.0 if y - m < 0 else 0.0)), 0.0

        for k in range(d):
            tsum[k] += th[k]

        if accumulate:
            xv = X[i]
            blk = slice(off, off + p)
            # (w^2 c^2 x_j) x_k matches the compiled evaluation order
            S_sum[blk, blk] += (w * w * coef * coef * xv)[:, None] * xv[None, :]
            if model != PINBALL:
                H_sum[blk, blk] += (w * hcoef * xv)[:, None] * xv[None, :]

        step = eta * w * coef
        for j in range(p):
            th[off + j] -= step * x[j]
        if not math.isfinite(step) or not all(math.isfinite(th[off + j]) for j in range(p)):
            status = t
            break

        if stride > 0 and t % stride == 0 and traj_pos < cap:
            traj_theta[traj_pos, :] = th
            traj_bar[traj_pos, :] = [s / t for s in tsum]
            traj_t[traj_pos] = t
            traj_action[traj_pos] = a
            traj_w[traj_pos] = w
            traj_eta[traj_pos] = eta
            traj_pos += 1

    theta[:] = th
    theta_sum[:] = tsum
    return status, traj_pos
