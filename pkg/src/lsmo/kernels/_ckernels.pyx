# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled counterparts of ``_pykernels``; same signatures, same numbers."""
import numpy as np

from libc.math cimport exp, fabs, sqrt, INFINITY

cdef double DEN1 = (0.09 + 1.0) * (0.09 + 1.0)
cdef double DEN3 = (0.04 + 1.0) * (0.04 + 1.0)


cdef inline double _toy(int fid, double x1, double x2) noexcept nogil:
    cdef double d
    if fid == 1:
        if x1 < 0.5:
            d = sqrt((x2 - 1.05) * (x2 - 1.05) + (x1 - 0.5) * (x1 - 0.5))
        elif x1 < 1.5:
            d = fabs(-0.3 * x1 - x2 + 1.2) / DEN1
        else:
            d = sqrt((x2 - 0.75) * (x2 - 0.75) + (x1 - 1.5) * (x1 - 1.5))
        return exp(-d)
    elif fid == 2:
        return exp(-fabs((x2 - 1.5) * (x2 - 1.5) + (x1 + 1.0) * (x1 + 1.0) - 2.5) / 10.0)
    elif fid == 3:
        if x1 < 0.7:
            d = sqrt((x2 - 0.94) * (x2 - 0.94) + (x1 - 0.7) * (x1 - 0.7))
        elif x1 < 1.4:
            d = fabs(0.2 * x1 - x2 + 0.8) / DEN3
        else:
            d = sqrt((x2 - 1.08) * (x2 - 1.08) + (x1 - 1.4) * (x1 - 1.4))
        return exp(-(d + 0.2 * x2 + 0.14))
    else:
        return exp(-fabs((x2 - 1.0) * (x2 - 1.0) + (x1 - 1.0) * (x1 - 1.0) - 0.5) / 10.0)


def toy_eval(int func_id, const double[:, ::1] pts):
    if func_id < 1 or func_id > 4:
        raise ValueError(f"unknown toy function {func_id}")
    cdef Py_ssize_t n = pts.shape[0], i
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _toy(func_id, pts[i, 0], pts[i, 1])
    return out


cdef inline double _local(double d, double eps) noexcept nogil:
    if d > eps:
        return 0.0
    if d >= 0.0:
        return 0.5 * (eps - d) * ((eps - d) / eps)
    return -d + 0.5 * eps


cdef inline double _slope(double d, double eps) noexcept nogil:
    if d > eps:
        return 0.0
    if d >= 0.0:
        return (d - eps) / eps
    return -1.0


cdef inline double _nearest(const double* p, const double[:, ::1] centers,
                            const double[::1] radii, Py_ssize_t D,
                            double* off, double* nrm) noexcept nogil:
    """Signed distance of ``p``; writes the offset to the active centre into ``off``."""
    cdef Py_ssize_t k, j, kbest = -1
    cdef double best = INFINITY, s, diff, r
    for k in range(radii.shape[0]):
        s = 0.0
        for j in range(D):
            diff = p[j] - centers[k, j]
            s += diff * diff
        r = sqrt(s) - radii[k]
        if r < best:
            best = r
            kbest = k
            nrm[0] = sqrt(s)
    if kbest >= 0:
        for j in range(D):
            off[j] = p[j] - centers[kbest, j]
    else:
        nrm[0] = 0.0
        for j in range(D):
            off[j] = 0.0
    return best


cdef void _accel(const double[:, ::1] path, double dt, double[:, ::1] acc) noexcept nogil:
    cdef Py_ssize_t T2 = path.shape[0], D = path.shape[1], r, j
    cdef double step, prev, nxt, inv = 1.0 / (dt * dt)
    for j in range(D):
        step = (path[T2 - 1, j] - path[0, j]) / (T2 - 1)
        for r in range(T2):
            prev = path[r - 1, j] if r > 0 else path[0, j] - step
            nxt = path[r + 1, j] if r < T2 - 1 else path[T2 - 1, j] + step
            acc[r, j] = (prev - 2.0 * path[r, j] + nxt) * inv


def path_costs(const double[:, :, ::1] paths, const double[:, ::1] centers, const double[::1] radii,
               double eps, double dt):
    cdef Py_ssize_t N = paths.shape[0], T2 = paths.shape[1], D = paths.shape[2]
    cdef Py_ssize_t n, t, j
    c_obs_arr = np.zeros(N)
    c_smooth_arr = np.zeros(N)
    cdef double[::1] c_obs = c_obs_arr, c_smooth = c_smooth_arr
    cdef double[:, ::1] acc = np.empty((T2, D))
    cdef double[::1] off = np.empty(max(D, 1))
    cdef double nrm, d, sp, v, tot
    with nogil:
        for n in range(N):
            tot = 0.0
            for t in range(1, T2 - 1):
                sp = 0.0
                for j in range(D):
                    v = (paths[n, t + 1, j] - paths[n, t - 1, j]) / (2.0 * dt)
                    sp += v * v
                d = _nearest(&paths[n, t, 0], centers, radii, D, &off[0], &nrm)
                tot += _local(d, eps) * sqrt(sp)
            c_obs[n] = 0.5 * tot
            _accel(paths[n], dt, acc)
            tot = 0.0
            for t in range(T2):
                for j in range(D):
                    tot += acc[t, j] * acc[t, j]
            c_smooth[n] = tot
    return c_obs_arr, c_smooth_arr


def path_cost_grad(const double[:, ::1] path, const double[:, ::1] centers, const double[::1] radii,
                   double eps, double dt, double smooth_weight):
    cdef Py_ssize_t T2 = path.shape[0], D = path.shape[1], T = T2 - 2, t, j
    grad_arr = np.zeros((T, D))
    cdef double[:, ::1] grad = grad_arr
    cdef double[:, ::1] acc = np.empty((T2, D))
    cdef double[:, ::1] vel = np.empty((T2, D))
    cdef double[::1] speed = np.zeros(T2), cost = np.zeros(T2)
    cdef double[::1] off = np.empty(max(D, 1))
    cdef double nrm, d, sp, c_obs = 0.0, c_smooth = 0.0, g, inv2 = 1.0 / (dt * dt)
    with nogil:
        for t in range(1, T2 - 1):
            sp = 0.0
            for j in range(D):
                vel[t, j] = (path[t + 1, j] - path[t - 1, j]) / (2.0 * dt)
                sp += vel[t, j] * vel[t, j]
            speed[t] = sqrt(sp)
            d = _nearest(&path[t, 0], centers, radii, D, &off[0], &nrm)
            cost[t] = _local(d, eps)
            c_obs += cost[t] * speed[t]
            g = 0.5 * _slope(d, eps) * speed[t]
            if g != 0.0 and nrm > 0.0:
                for j in range(D):
                    grad[t - 1, j] += g * off[j] / nrm
        c_obs *= 0.5
        for t in range(1, T2 - 1):
            if cost[t] == 0.0 or speed[t] == 0.0:
                continue
            g = 0.5 * cost[t] / (speed[t] * 2.0 * dt)
            for j in range(D):
                # v_t moves with rows t + 1 (plus) and t - 1 (minus)
                if t + 1 <= T:
                    grad[t, j] += g * vel[t, j]
                if t - 1 >= 1:
                    grad[t - 2, j] -= g * vel[t, j]
        _accel(path, dt, acc)
        for t in range(T2):
            for j in range(D):
                c_smooth += acc[t, j] * acc[t, j]
        for t in range(1, T2 - 1):
            for j in range(D):
                grad[t - 1, j] += smooth_weight * 2.0 * (
                    acc[t - 1, j] - 2.0 * acc[t, j] + acc[t + 1, j]) * inv2
    return c_obs, c_smooth, grad_arr
