"""Independent reference implementations used to derive expected test values.

These deliberately avoid the library's code paths: quadrature instead of
closed forms, scalar loops instead of vectorized kernels, projection geometry
instead of cross products.
"""

import itertools

import numpy as np
from scipy import integrate, stats


def blocks_projection(a, b_point, c_point, block_distance):
    """Blockage test via projection onto the segment: t = (c.b)/|b|^2, d = |c - t*b|."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b_point, dtype=float) - a
    c = np.asarray(c_point, dtype=float) - a
    bb = float(b @ b)
    t = float(c @ b) / bb
    d = np.linalg.norm(c - t * b)
    return (d < block_distance) and (float(b @ c) > 0.0) and (abs(float(c @ b)) < bb)


def occlusion_matrices_brute(field, layout, params):
    """Entrywise occlusion matrices via scalar projection-form loops."""
    centers = field.grid.centers
    n_s = field.grid.n_voxels
    blocker_idx = [i for i in range(n_s) if field.x[i] > params.coeff_threshold]
    v_user = np.ones((layout.n_users, n_s), dtype=np.uint8)
    for u in range(layout.n_users):
        for s in range(n_s):
            for k in blocker_idx:
                if k == s:
                    continue
                if blocks_projection(layout.users[u], centers[s], centers[k], params.block_distance):
                    v_user[u, s] = 0
                    break
    v_bs = np.ones((n_s, layout.n_antennas), dtype=np.uint8)
    for s in range(n_s):
        for r in range(layout.n_antennas):
            for k in blocker_idx:
                if k == s:
                    continue
                if blocks_projection(centers[s], layout.bs_antennas[r], centers[k], params.block_distance):
                    v_bs[s, r] = 0
                    break
    return v_user, v_bs


def multipath_brute(field, layout, occ, carrier_hz):
    """Triple-loop sum over (user, antenna, voxel) of v * h_uv * h_va * x."""
    c0 = 299_792_458.0
    wavelength = c0 / carrier_hz
    centers = field.grid.centers
    n_u, n_r = layout.n_users, layout.n_antennas
    out = np.zeros(n_u * n_r, dtype=complex)
    for r in range(n_r):
        for u in range(n_u):
            acc = 0.0 + 0.0j
            for s in range(field.grid.n_voxels):
                if field.x[s] == 0.0:
                    continue
                v = occ.v_user[u, s] * occ.v_bs[s, r]
                if v == 0:
                    continue
                d1 = np.linalg.norm(layout.users[u] - centers[s])
                d2 = np.linalg.norm(centers[s] - layout.bs_antennas[r])
                h1 = wavelength / (4 * np.pi * d1) * np.exp(-2j * np.pi * d1 / wavelength)
                h2 = wavelength / (4 * np.pi * d2) * np.exp(-2j * np.pi * d2 / wavelength)
                acc += v * h1 * h2 * field.x[s]
            out[r * n_u + u] = acc
    return out


def _gauss_pdf(x, mean, var):
    return np.exp(-((x - mean) ** 2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)


def spike_slab_posterior_quad(r_bar, sigma_r, sparsity, slab_mean, slab_var):
    """Posterior mean/variance under the spike-and-slab prior by adaptive quadrature.

    The spike contributes analytically; the slab integrals run over a window
    wide enough to hold all posterior mass.
    """
    lam = sparsity
    spike_like = _gauss_pdf(r_bar, 0.0, sigma_r)

    def integrand(x, power):
        return x**power * _gauss_pdf(x, slab_mean, slab_var) * _gauss_pdf(x, r_bar, sigma_r)

    span = 12.0 * np.sqrt(max(slab_var, sigma_r))
    lo = min(0.0, r_bar, slab_mean) - span
    hi = max(0.0, r_bar, slab_mean) + span
    z1, _ = integrate.quad(integrand, lo, hi, args=(0,), epsabs=1e-13, epsrel=1e-11, limit=200)
    m1, _ = integrate.quad(integrand, lo, hi, args=(1,), epsabs=1e-13, epsrel=1e-11, limit=200)
    m2, _ = integrate.quad(integrand, lo, hi, args=(2,), epsabs=1e-13, epsrel=1e-11, limit=200)
    z = (1 - lam) * spike_like + lam * z1
    mean = lam * m1 / z
    var = lam * m2 / z - mean**2
    return mean, var


def two_point_posterior_enum(rho, h_pair, q_pair, sq_pair):
    """Posterior of a present/blocked channel pair by direct enumeration."""
    h = np.asarray(h_pair, dtype=float)
    q = np.asarray(q_pair, dtype=float)
    sq = np.asarray(sq_pair, dtype=float)
    like_on = np.prod(stats.norm.pdf(q, h, np.sqrt(sq)))
    like_off = np.prod(stats.norm.pdf(q, 0.0, np.sqrt(sq)))
    w = (1 - rho) * like_on / ((1 - rho) * like_on + rho * like_off)
    mean = w * h
    var = w * h**2 - mean**2
    return w, mean, var


def exhaustive_support_ls(a, y, k):
    """Best and runner-up least-squares residuals over all k-sized supports.

    Returns (best_support, best_residual_sq, second_residual_sq, coefficients).
    """
    m, n = a.shape
    gram = a.T @ a
    aty = a.T @ y
    yy = float(y @ y)
    best = (None, np.inf, None)
    second = np.inf
    combos = np.array(list(itertools.combinations(range(n), k)))
    chunk = 20000
    for i in range(0, combos.shape[0], chunk):
        cc = combos[i : i + chunk]
        g = gram[cc[:, :, None], cc[:, None, :]]
        b = aty[cc]
        coef = np.linalg.solve(g, b[..., None])[..., 0]
        res = yy - np.einsum("ij,ij->i", b, coef)
        order = np.argsort(res)
        for j in order[:2]:
            r = float(res[j])
            if r < best[1]:
                second = best[1]
                best = (tuple(cc[j]), r, coef[j])
            elif r < second:
                second = r
    return best[0], best[1], second, best[2]
