"""Hot numeric kernels.

Every kernel exists twice: an explicit-loop version (compiled with numba
unless ``RTMODES_DISABLE_JIT`` is set) and a vectorized numpy version.  The
public names at the bottom of this module pick one of the two at import
time; ``LOOP_KERNELS`` and ``NUMPY_KERNELS`` expose both for benchmarking
and cross-checking.

Conventions shared by all kernels:

* Cubic Hermite DOFs are ordered ``(value_0, slope_0, value_1, slope_1, ...)``,
  one pair per node.
* ``side`` selects the element used when a point falls exactly on a node:
  ``+1`` takes the element to the right, ``-1`` the element to the left.
"""
import numpy as np

from ._jit import JIT_ENABLED, select

GAUSS_POINTS, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(4)
# mapped to the unit interval
GAUSS_T = 0.5 * (GAUSS_POINTS + 1.0)
GAUSS_W = 0.5 * GAUSS_WEIGHTS


# ---------------------------------------------------------------------------
# Hermite shape functions on an element of length h, local coordinate t in [0,1]
# ---------------------------------------------------------------------------


def _shape_loop(t, h, deriv, out):
    if deriv == 0:
        out[0] = 1.0 - 3.0 * t * t + 2.0 * t * t * t
        out[1] = h * (t - 2.0 * t * t + t * t * t)
        out[2] = 3.0 * t * t - 2.0 * t * t * t
        out[3] = h * (-t * t + t * t * t)
    elif deriv == 1:
        out[0] = (-6.0 * t + 6.0 * t * t) / h
        out[1] = 1.0 - 4.0 * t + 3.0 * t * t
        out[2] = (6.0 * t - 6.0 * t * t) / h
        out[3] = -2.0 * t + 3.0 * t * t
    elif deriv == 2:
        out[0] = (-6.0 + 12.0 * t) / (h * h)
        out[1] = (-4.0 + 6.0 * t) / h
        out[2] = (6.0 - 12.0 * t) / (h * h)
        out[3] = (-2.0 + 6.0 * t) / h
    else:
        out[0] = 12.0 / (h * h * h)
        out[1] = 6.0 / (h * h)
        out[2] = -12.0 / (h * h * h)
        out[3] = 6.0 / (h * h)


def shape_numpy(t, h, deriv):
    """Hermite basis (or its x-derivative) at local ``t``; shape ``t.shape + (4,)``.

    ``h`` broadcasts against ``t``.
    """
    t = np.asarray(t, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), t.shape)
    if deriv == 0:
        cols = (1 - 3 * t**2 + 2 * t**3, h * (t - 2 * t**2 + t**3), 3 * t**2 - 2 * t**3, h * (t**3 - t**2))
    elif deriv == 1:
        cols = ((6 * t**2 - 6 * t) / h, 1 - 4 * t + 3 * t**2, (6 * t - 6 * t**2) / h, 3 * t**2 - 2 * t)
    elif deriv == 2:
        cols = ((12 * t - 6) / h**2, (6 * t - 4) / h, (6 - 12 * t) / h**2, (6 * t - 2) / h)
    else:
        one = np.ones_like(t)
        cols = (12 * one / h**3, 6 * one / h**2, -12 * one / h**3, 6 * one / h**2)
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# Assembly of the E1 and J forms (full DOF set, clamping applied by the caller)
# ---------------------------------------------------------------------------


def _assemble_loop(nodes, rho_e, mu_e, k, gt, gw):
    n_nodes = nodes.shape[0]
    ndof = 2 * n_nodes
    E1 = np.zeros((ndof, ndof))
    J = np.zeros((ndof, ndof))
    n0 = np.empty(4)
    n1 = np.empty(4)
    n2 = np.empty(4)
    k2 = k * k
    k4 = k2 * k2
    for e in range(n_nodes - 1):
        h = nodes[e + 1] - nodes[e]
        rho = rho_e[e]
        mu = mu_e[e]
        base = 2 * e
        for q in range(gt.shape[0]):
            w = gw[q] * h
            _shape_loop(gt[q], h, 0, n0)
            _shape_loop(gt[q], h, 1, n1)
            _shape_loop(gt[q], h, 2, n2)
            for a in range(4):
                for c in range(4):
                    jv = 0.5 * rho * (k2 * n0[a] * n0[c] + n1[a] * n1[c])
                    ev = 0.5 * mu * (
                        4.0 * k2 * n1[a] * n1[c]
                        + k4 * n0[a] * n0[c]
                        + k2 * (n0[a] * n2[c] + n2[a] * n0[c])
                        + n2[a] * n2[c]
                    )
                    J[base + a, base + c] += w * jv
                    E1[base + a, base + c] += w * ev
    return E1, J


def _assemble_numpy(nodes, rho_e, mu_e, k, gt, gw):
    h = np.diff(nodes)
    tt = np.broadcast_to(gt, (h.size, gt.size))
    hh = h[:, None]
    n0 = shape_numpy(tt, hh, 0)
    n1 = shape_numpy(tt, hh, 1)
    n2 = shape_numpy(tt, hh, 2)
    w = gw[None, :] * hh
    m0 = np.einsum("eq,eqa,eqc->eac", w, n0, n0)
    m1 = np.einsum("eq,eqa,eqc->eac", w, n1, n1)
    m2 = np.einsum("eq,eqa,eqc->eac", w, n2, n2)
    c02 = np.einsum("eq,eqa,eqc->eac", w, n0, n2)
    k2 = k * k
    je = 0.5 * rho_e[:, None, None] * (k2 * m0 + m1)
    ee = 0.5 * mu_e[:, None, None] * (4 * k2 * m1 + k2 * k2 * m0 + k2 * (c02 + c02.transpose(0, 2, 1)) + m2)
    ndof = 2 * nodes.size
    idx = 2 * np.arange(h.size)[:, None] + np.arange(4)[None, :]
    rows = np.broadcast_to(idx[:, :, None], ee.shape)
    cols = np.broadcast_to(idx[:, None, :], ee.shape)
    E1 = np.zeros((ndof, ndof))
    J = np.zeros((ndof, ndof))
    np.add.at(E1, (rows, cols), ee)
    np.add.at(J, (rows, cols), je)
    return E1, J


# ---------------------------------------------------------------------------
# Pointwise evaluation of a Hermite expansion
# ---------------------------------------------------------------------------


def _locate(nodes, x, side):
    n_el = nodes.shape[0] - 1
    if side > 0:
        e = np.searchsorted(nodes, x, side="right") - 1
    else:
        e = np.searchsorted(nodes, x, side="left") - 1
    return min(max(e, 0), n_el - 1)


def _hermite_eval_loop(nodes, coeffs, x, deriv, side):
    out = np.empty(x.shape[0])
    basis = np.empty(4)
    for i in range(x.shape[0]):
        e = _locate(nodes, x[i], side)
        h = nodes[e + 1] - nodes[e]
        t = (x[i] - nodes[e]) / h
        _shape_loop(t, h, deriv, basis)
        acc = 0.0
        for a in range(4):
            acc += basis[a] * coeffs[2 * e + a]
        out[i] = acc
    return out


def _hermite_eval_numpy(nodes, coeffs, x, deriv, side):
    n_el = nodes.size - 1
    e = np.searchsorted(nodes, x, side="right" if side > 0 else "left") - 1
    e = np.clip(e, 0, n_el - 1)
    h = nodes[e + 1] - nodes[e]
    t = (x - nodes[e]) / h
    basis = shape_numpy(t, h, deriv)
    local = coeffs[2 * e[:, None] + np.arange(4)[None, :]]
    return np.einsum("pa,pa->p", basis, local)


# ---------------------------------------------------------------------------
# Truncated Fourier sums with exponential vertical kernels (Poisson extensions)
#
#   Re sum_n amp_n (i xi1)^d1 (i xi2)^d2 sum_j w_j (|xi| c_j)^d3 exp(|xi| c_j (x3 - x0)) exp(i xi.x')
# ---------------------------------------------------------------------------


def _poisson_sum_loop(xi1, xi2, amp_re, amp_im, w, c, x0, x1, x2, x3, d1, d2, d3):
    npts = x1.shape[0]
    out = np.zeros(npts)
    nm = xi1.shape[0]
    for m in range(nm):
        k = np.sqrt(xi1[m] * xi1[m] + xi2[m] * xi2[m])
        fac = (xi1[m] ** d1) * (xi2[m] ** d2)
        # i^(d1+d2) rotates (re, im)
        p = (d1 + d2) % 4
        ar = amp_re[m] * fac
        ai = amp_im[m] * fac
        if p == 1:
            ar, ai = -ai, ar
        elif p == 2:
            ar, ai = -ar, -ai
        elif p == 3:
            ar, ai = ai, -ar
        for i in range(npts):
            kern = 0.0
            for j in range(w.shape[0]):
                kc = k * c[j]
                kern += w[j] * (kc**d3) * np.exp(kc * (x3[i] - x0))
            ph = xi1[m] * x1[i] + xi2[m] * x2[i]
            out[i] += kern * (ar * np.cos(ph) - ai * np.sin(ph))
    return out


def _poisson_sum_numpy(xi1, xi2, amp_re, amp_im, w, c, x0, x1, x2, x3, d1, d2, d3):
    k = np.hypot(xi1, xi2)
    amp = (amp_re + 1j * amp_im) * (1j * xi1) ** d1 * (1j * xi2) ** d2
    kc = k[:, None] * c[None, :]
    kern = np.einsum("j,mj,mjp->mp", w, kc**d3, np.exp(kc[:, :, None] * (x3[None, None, :] - x0)))
    phase = np.exp(1j * (xi1[:, None] * x1[None, :] + xi2[:, None] * x2[None, :]))
    return np.real(np.einsum("m,mp,mp->p", amp, kern, phase))


# ---------------------------------------------------------------------------
# Steepest descent on the Rayleigh quotient with exact 2-D line search
# ---------------------------------------------------------------------------


def _rayleigh_descent_loop(A, Jm, Jinv, starts, maxiter, stall):
    n, m = starts.shape
    best = np.empty(m)
    iters = np.empty(m, dtype=np.int64)
    for s in range(m):
        psi = starts[:, s].copy()
        nj = np.sqrt(psi @ (Jm @ psi))
        psi /= nj
        Apsi = A @ psi
        R = psi @ Apsi
        flat = 0
        it = 0
        while it < maxiter:
            it += 1
            d = Jinv @ Apsi - R * psi
            Jd = Jm @ d
            proj = psi @ Jd
            d = d - proj * psi
            Jd = Jm @ d
            dn = d @ Jd
            if dn <= 0.0:
                break
            d /= np.sqrt(dn)
            Ad = A @ d
            a11 = R
            a12 = psi @ Ad
            a22 = d @ Ad
            half = 0.5 * (a11 - a22)
            mu = 0.5 * (a11 + a22) - np.sqrt(half * half + a12 * a12)
            v1 = a12
            v2 = mu - a11
            u1 = mu - a22
            u2 = a12
            if u1 * u1 + u2 * u2 > v1 * v1 + v2 * v2:
                v1 = u1
                v2 = u2
            nv = np.sqrt(v1 * v1 + v2 * v2)
            if nv == 0.0:
                break
            new = (v1 * psi + v2 * d) / nv
            new /= np.sqrt(new @ (Jm @ new))
            Anew = A @ new
            Rn = new @ Anew
            if Rn < R - 1e-15 * (1.0 + abs(R)):
                flat = 0
            else:
                flat += 1
            if Rn <= R:
                psi = new
                Apsi = Anew
                R = Rn
            if flat >= stall:
                break
        best[s] = R
        iters[s] = it
    return best, iters


def _rayleigh_descent_numpy(A, Jm, Jinv, starts, maxiter, stall):
    psi = starts.copy()
    psi /= np.sqrt(np.einsum("ns,ns->s", psi, Jm @ psi))
    Apsi = A @ psi
    R = np.einsum("ns,ns->s", psi, Apsi)
    flat = np.zeros(psi.shape[1], dtype=np.int64)
    iters = np.zeros(psi.shape[1], dtype=np.int64)
    active = np.ones(psi.shape[1], dtype=bool)
    for _ in range(maxiter):
        if not active.any():
            break
        iters[active] += 1
        d = Jinv @ Apsi - R * psi
        d -= np.einsum("ns,ns->s", psi, Jm @ d) * psi
        dn = np.einsum("ns,ns->s", d, Jm @ d)
        ok = active & (dn > 0.0)
        active &= ok
        d[:, ok] /= np.sqrt(dn[ok])
        Ad = A @ d
        a11 = R
        a12 = np.einsum("ns,ns->s", psi, Ad)
        a22 = np.einsum("ns,ns->s", d, Ad)
        half = 0.5 * (a11 - a22)
        mu = 0.5 * (a11 + a22) - np.sqrt(half**2 + a12**2)
        v1, v2 = a12, mu - a11
        u1, u2 = mu - a22, a12
        swap = u1**2 + u2**2 > v1**2 + v2**2
        v1 = np.where(swap, u1, v1)
        v2 = np.where(swap, u2, v2)
        nv = np.hypot(v1, v2)
        active &= nv > 0.0
        nv = np.where(nv > 0.0, nv, 1.0)
        new = (v1 / nv) * psi + (v2 / nv) * d
        new /= np.sqrt(np.einsum("ns,ns->s", new, Jm @ new))
        Anew = A @ new
        Rn = np.einsum("ns,ns->s", new, Anew)
        improved = Rn < R - 1e-15 * (1.0 + np.abs(R))
        flat = np.where(improved, 0, flat + 1)
        take = active & (Rn <= R)
        psi[:, take] = new[:, take]
        Apsi[:, take] = Anew[:, take]
        R = np.where(take, Rn, R)
        active &= flat < stall
    return R, iters


# ---------------------------------------------------------------------------
# Shifted inverse iteration for the smallest eigenpair of a banded pencil.
# Band storage: band[i, d] = M[i, i + d] for d = 0..kd (upper triangle).
# Status: 1 converged, 0 iteration cap, -1 (A - shift J) not positive definite.
# ---------------------------------------------------------------------------


def _band_matvec(band, x, out):
    n, w = band.shape
    for i in range(n):
        out[i] = band[i, 0] * x[i]
    for i in range(n):
        for d in range(1, w):
            j = i + d
            if j >= n:
                break
            out[i] += band[i, d] * x[j]
            out[j] += band[i, d] * x[i]


def _inverse_iteration_loop(A, J, shift, x0, maxiter, tol):
    n, w = A.shape
    kd = w - 1
    R = np.zeros((n, w))
    for i in range(n):
        for d in range(w):
            j = i + d
            if j >= n:
                break
            acc = A[i, d] - shift * J[i, d]
            for k in range(max(0, j - kd), i):
                acc -= R[k, i - k] * R[k, j - k]
            if d == 0:
                if not acc > 0.0:
                    return x0.copy(), 0, -1
                R[i, 0] = np.sqrt(acc)
            else:
                R[i, d] = acc / R[i, 0]
    x = x0.copy()
    Jx = np.zeros(n)
    _band_matvec(J, x, Jx)
    x /= np.sqrt(x @ Jx)
    y = np.zeros(n)
    Jy = np.zeros(n)
    diff = np.zeros(n)
    prev_step = -1.0
    for it in range(1, maxiter + 1):
        _band_matvec(J, x, Jx)
        # R^T y = J x
        for i in range(n):
            acc = Jx[i]
            for k in range(max(0, i - kd), i):
                acc -= R[k, i - k] * y[k]
            y[i] = acc / R[i, 0]
        # R y = y, in place
        for i in range(n - 1, -1, -1):
            acc = y[i]
            for j in range(i + 1, min(n, i + w)):
                acc -= R[i, j - i] * y[j]
            y[i] = acc / R[i, 0]
        _band_matvec(J, y, Jy)
        y /= np.sqrt(y @ Jy)
        if y @ Jx < 0.0:
            y *= -1.0
        for i in range(n):
            diff[i] = y[i] - x[i]
        _band_matvec(J, diff, Jy)
        step = np.sqrt(max(diff @ Jy, 0.0))
        x[:] = y
        if prev_step > 0.0:
            r = step / prev_step
            if r < 1.0 and step * r / (1.0 - r) <= tol:
                return x, it, 1
        if step <= 1e-3 * tol:
            return x, it, 1
        prev_step = step
    return x, maxiter, 0


def _to_lapack_band(band):
    n, w = band.shape
    ab = np.zeros((w, n))
    for d in range(w):
        ab[w - 1 - d, d:] = band[: n - d, d]
    return ab


def _band_matvec_numpy(band, x):
    n, w = band.shape
    out = band[:, 0] * x
    for d in range(1, w):
        out[:-d] += band[:-d, d] * x[d:]
        out[d:] += band[:-d, d] * x[:-d]
    return out


def _inverse_iteration_numpy(A, J, shift, x0, maxiter, tol):
    from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

    try:
        c = cholesky_banded(_to_lapack_band(A - shift * J), lower=False, check_finite=False)
    except LinAlgError:
        return x0.copy(), 0, -1
    x = x0 / np.sqrt(x0 @ _band_matvec_numpy(J, x0))
    prev_step = -1.0
    for it in range(1, maxiter + 1):
        y = cho_solve_banded((c, False), _band_matvec_numpy(J, x), check_finite=False)
        y /= np.sqrt(y @ _band_matvec_numpy(J, y))
        if y @ _band_matvec_numpy(J, x) < 0.0:
            y = -y
        diff = y - x
        step = np.sqrt(max(diff @ _band_matvec_numpy(J, diff), 0.0))
        x = y
        if prev_step > 0.0:
            r = step / prev_step
            if r < 1.0 and step * r / (1.0 - r) <= tol:
                return x, it, 1
        if step <= 1e-3 * tol:
            return x, it, 1
        prev_step = step
    return x, maxiter, 0


if JIT_ENABLED:
    from numba import njit

    _shape_loop = njit(cache=True)(_shape_loop)
    _locate = njit(cache=True)(_locate)
    _band_matvec = njit(cache=True)(_band_matvec)

assemble_forms = select(_assemble_loop, _assemble_numpy)
_hermite_eval = select(_hermite_eval_loop, _hermite_eval_numpy)
_poisson_sum = select(_poisson_sum_loop, _poisson_sum_numpy)
rayleigh_descent = select(_rayleigh_descent_loop, _rayleigh_descent_numpy)
inverse_iteration = select(_inverse_iteration_loop, _inverse_iteration_numpy)

NUMPY_KERNELS = {
    "assemble": _assemble_numpy,
    "hermite_eval": _hermite_eval_numpy,
    "poisson_sum": _poisson_sum_numpy,
    "rayleigh_descent": _rayleigh_descent_numpy,
    "inverse_iteration": _inverse_iteration_numpy,
}
# compiled loop kernels; empty when JIT is disabled
LOOP_KERNELS = (
    {
        "assemble": assemble_forms,
        "hermite_eval": _hermite_eval,
        "poisson_sum": _poisson_sum,
        "rayleigh_descent": rayleigh_descent,
        "inverse_iteration": inverse_iteration,
    }
    if JIT_ENABLED
    else {}
)


def hermite_eval(nodes, coeffs, x, deriv=0, side=1):
    """Evaluate a full-DOF Hermite expansion (or a derivative up to 3) at ``x``."""
    x = np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=float)))
    return _hermite_eval(nodes, np.ascontiguousarray(coeffs, dtype=float), x, int(deriv), int(side))


def poisson_sum(xi1, xi2, amp, weights, rates, x0, x1, x2, x3, d1=0, d2=0, d3=0):
    """Real part of a truncated exponential-kernel Fourier sum at the points ``(x1, x2, x3)``."""
    amp = np.asarray(amp, dtype=complex)
    args = [np.ascontiguousarray(a, dtype=float) for a in (xi1, xi2, amp.real, amp.imag, weights, rates)]
    pts = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x1, x2, x3)))
    shape = pts[0].shape
    flat = [np.ascontiguousarray(p.ravel()) for p in pts]
    out = _poisson_sum(*args, float(x0), *flat, int(d1), int(d2), int(d3))
    return out.reshape(shape)
