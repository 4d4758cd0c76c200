# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: train sampling on grids, the multipeakon ODE
right-hand side, fixed-step RK4, and the recursive exponential filter."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()

BACKEND = "compiled"


def eval_train(p, q, x):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pa = np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] qa = np.ascontiguousarray(q, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = pa.shape[0], m = xa.shape[0], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.zeros(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ux = np.zeros(m)
    cdef double d, e, su, sx, xi
    for i in range(m):
        xi = xa[i]
        su = 0.0
        sx = 0.0
        for j in range(n):
            d = xi - qa[j]
            e = pa[j] * exp(-fabs(d))
            su += e
            if d > 0.0:
                sx -= e
            elif d < 0.0:
                sx += e
        u[i] = su
        ux[i] = sx
    return u, ux


cdef void _rhs(double* p, double* q, double* qdot, double* pdot, Py_ssize_t n) noexcept:
    cdef Py_ssize_t i, j
    cdef double d, e, sq, sp
    for i in range(n):
        sq = 0.0
        sp = 0.0
        for j in range(n):
            d = q[i] - q[j]
            e = p[j] * exp(-fabs(d))
            sq += e
            if d > 0.0:
                sp += e
            elif d < 0.0:
                sp -= e
        qdot[i] = sq
        pdot[i] = p[i] * sp


def ode_rhs(p, q):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pa = np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] qa = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t n = pa.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] qdot = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pdot = np.empty(n)
    _rhs(&pa[0], &qa[0], &qdot[0], &pdot[0], n)
    return qdot, pdot


def rk4_path(p0, q0, double dt, Py_ssize_t nsteps):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p = np.array(p0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] q = np.array(q0, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], i, step
    cdef cnp.ndarray[cnp.float64_t, ndim=2] work = np.empty((10, n))
    cdef double[:, ::1] w = work
    cdef double half = 0.5 * dt, sixth = dt / 6.0
    # rows: kq1 kp1 kq2 kp2 kq3 kp3 kq4 kp4 ptmp qtmp
    for step in range(nsteps):
        _rhs(&p[0], &q[0], &w[0, 0], &w[1, 0], n)
        for i in range(n):
            w[8, i] = p[i] + half * w[1, i]
            w[9, i] = q[i] + half * w[0, i]
        _rhs(&w[8, 0], &w[9, 0], &w[2, 0], &w[3, 0], n)
        for i in range(n):
            w[8, i] = p[i] + half * w[3, i]
            w[9, i] = q[i] + half * w[2, i]
        _rhs(&w[8, 0], &w[9, 0], &w[4, 0], &w[5, 0], n)
        for i in range(n):
            w[8, i] = p[i] + dt * w[5, i]
            w[9, i] = q[i] + dt * w[4, i]
        _rhs(&w[8, 0], &w[9, 0], &w[6, 0], &w[7, 0], n)
        for i in range(n):
            q[i] += sixth * (w[0, i] + 2.0 * w[2, i] + 2.0 * w[4, i] + w[6, i])
            p[i] += sixth * (w[1, i] + 2.0 * w[3, i] + 2.0 * w[5, i] + w[7, i])
    return p, q


def exp_accumulate(v, double dx):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] va = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t m = va.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] fwd = np.empty(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bwd = np.empty(m)
    cdef double a = exp(-dx), acc
    acc = 0.0
    for i in range(m):
        acc = a * acc + va[i]
        fwd[i] = acc
    acc = 0.0
    for i in range(m - 1, -1, -1):
        acc = a * acc + va[i]
        bwd[i] = acc
    return fwd, bwd
