"""Compiled Monte Carlo trial loops.

These kernels replicate the reference pipelines in
:mod:`vacal.harness.pipeline` for whole trials at a time: scene synthesis
from pre-drawn randomness, predistortion, CLEAN, NLMS updates,
normalization/detrending, and Tx/Rx factorization. Everything stochastic
is drawn up front with numpy generators, so a kernel run is a pure
function of its input arrays. Parity with the reference path is covered
by dedicated tests.

Array conventions:
- spectra are evaluated with the cached DFT operator (bin l at frequency
  -0.5 + l/N), identical to the reconstruction module;
- gain/phase channel axes are concatenated as [va | tx | rx];
- ground-truth rows may be constant (one row) or per-iteration.
"""

import numpy as np
from numba import njit

TWO_PI = 2.0 * np.pi


@njit(cache=True)
def _clean(x, w, grid, stop_lin, max_targets, amps_out, freqs_out):
    """CLEAN loop on one vector; returns the number of targets found."""
    k = x.shape[0]
    n = w.shape[0]
    work = x.copy()
    n_found = 0
    first_mag = 0.0
    while n_found < max_targets:
        y = np.dot(w, work)
        best = 0
        best_power = -1.0
        for l in range(n):
            p = y[l].real * y[l].real + y[l].imag * y[l].imag
            if p > best_power:
                best_power = p
                best = l
        mag = np.sqrt(best_power)
        if mag == 0.0:
            break
        frequency = grid[best]
        amplitude = y[best] / k
        for m in range(k):
            ang = TWO_PI * frequency * m
            work[m] -= amplitude * complex(np.cos(ang), np.sin(ang))
        if n_found > 0 and mag < stop_lin * first_mag:
            break
        if n_found == 0:
            first_mag = mag
        amps_out[n_found] = amplitude
        freqs_out[n_found] = frequency
        n_found += 1
    return n_found


@njit(cache=True)
def _synth_scene(i, q1s, q2s, p_db, s_db, phases, doas, spacing, s_out):
    """Build scene i's ideal vector; returns the dominant amplitude."""
    k = s_out.shape[0]
    q1 = q1s[i]
    q2 = q2s[i]
    dominant_db = -1e300
    for j in range(q1):
        if p_db[i, j] > dominant_db:
            dominant_db = p_db[i, j]
    if q1 == 0:
        dominant_db = 0.0
    for m in range(k):
        s_out[m] = 0.0
    peak = 0.0
    for j in range(q1 + q2):
        db = p_db[i, j] if j < q1 else dominant_db + s_db[i, j - q1]
        amp = 10.0 ** (db / 20.0)
        if amp > peak:
            peak = amp
        alpha = amp * complex(np.cos(phases[i, j]), np.sin(phases[i, j]))
        f = spacing * np.sin(doas[i, j] * np.pi / 180.0)
        if f >= 0.5:
            f = -0.5
        for m in range(k):
            ang = TWO_PI * f * m
            s_out[m] += alpha * complex(np.cos(ang), np.sin(ang))
    return peak


@njit(cache=True)
def _canon(psi_hat, xi_out, gamma_out, phi_out):
    """Normalize to the reference channel, unwrap, detrend, re-reference."""
    k = psi_hat.shape[0]
    ref = psi_hat[0]
    prev = 0.0
    offset = 0.0
    sy = 0.0
    syk = 0.0
    for m in range(k):
        z = psi_hat[m] / ref
        if m == 0:
            z = complex(1.0, 0.0)
        gamma_out[m] = np.abs(z) - 1.0
        ang = np.arctan2(z.imag, z.real) + offset
        d = ang - prev
        corr = TWO_PI * np.round(d / TWO_PI)
        ang -= corr
        offset -= corr
        phi_out[m] = ang
        prev = ang
        sy += ang
        syk += ang * (m + 1.0)
    sk = 0.5 * k * (k + 1.0)
    skk = k * (k + 1.0) * (2.0 * k + 1.0) / 6.0
    slope = (k * syk - sk * sy) / (k * skk - sk * sk)
    for m in range(k):
        phi_out[m] -= slope * m
        xi_out[m] = (1.0 + gamma_out[m]) * complex(np.cos(phi_out[m]), np.sin(phi_out[m]))
    xi_out[0] = complex(1.0, 0.0)
    phi_out[0] = 0.0


@njit(cache=True)
def _txrx(xi, k_t, k_r, gain_out, phase_out, base):
    """Averaged Tx/Rx factors of xi; writes GPIs at gain_out[base:] etc."""
    for t in range(k_t):
        acc = complex(0.0, 0.0)
        for r in range(k_r):
            acc += xi[t * k_r + r] / xi[r]
        acc /= k_r
        if t == 0:
            acc = complex(1.0, 0.0)
        gain_out[base + t] = np.abs(acc) - 1.0
        phase_out[base + t] = np.arctan2(acc.imag, acc.real)
    for r in range(k_r):
        acc = complex(0.0, 0.0)
        for t in range(k_t):
            acc += xi[t * k_r + r] / xi[t * k_r]
        acc /= k_t
        if r == 0:
            acc = complex(1.0, 0.0)
        gain_out[base + k_t + r] = np.abs(acc) - 1.0
        phase_out[base + k_t + r] = np.arctan2(acc.imag, acc.real)


@njit(cache=True)
def _nlms(psi_hat, s_hat, x, mu0):
    """Shared-scalar-step NLMS sweep; returns 0 if skipped (no energy)."""
    k = psi_hat.shape[0]
    energy = 0.0
    for m in range(k):
        energy += s_hat[m].real * s_hat[m].real + s_hat[m].imag * s_hat[m].imag
    if energy == 0.0:
        return 0
    mu = mu0 / energy
    for m in range(k):
        grad = np.conj(s_hat[m]) * (psi_hat[m] * s_hat[m] - x[m])
        psi_hat[m] = psi_hat[m] - mu * grad
    return 1


@njit(cache=True)
def calibration_trial(
    w,
    grid,
    spacing,
    x_in,
    use_x_in,
    q1s,
    q2s,
    p_db,
    s_db,
    phases,
    doas,
    noise,
    use_noise,
    sigma_scale,
    psi_rows,
    truth_gain,
    truth_phase,
    varying,
    mu_rows,
    stop_lin,
    max_targets,
    run_prop,
    run_st,
    exact_recon,
    record_err,
    record_xi,
    bias_from,
    k_t,
    k_r,
    p_err_gain,
    p_err_phase,
    p_rec_err,
    p_xi_trace,
    p_psi_final,
    p_xi_final,
    s_err_gain,
    s_err_phase,
    s_xi_trace,
    s_psi_final,
    s_xi_final,
    u1_sum,
    u2_sum,
    w_sum,
    err_psi_sum,
):
    """One full trial of the calibration loop, optionally with the
    single-target baseline running in parallel on the same scenes.

    Bias accumulators: u1 = |s_hat[k]|^2 / ||s_hat||^2, u2 =
    conj(s_hat[k]) r[k] / ||s_hat||^2 with r = s_hat - s, and w =
    conj(s_hat[k]) n[k] / ||s_hat||^2 with n the realized measurement
    noise (known in simulation); w quantifies the reconstruction-noise
    correlation that the independence assumption drops.

    Returns (proposed skips, baseline update count, bias sample count).
    """
    n_iter = mu_rows.shape[0]
    k = w.shape[1]
    n_ch = k + k_t + k_r
    s_true = np.empty(k, np.complex128)
    x = np.empty(k, np.complex128)
    x_pd = np.empty(k, np.complex128)
    s_hat = np.empty(k, np.complex128)
    amps_buf = np.empty(max_targets, np.complex128)
    freqs_buf = np.empty(max_targets)
    psi_p = np.ones(k, np.complex128)
    xi_p = np.ones(k, np.complex128)
    gain_p = np.zeros(n_ch)
    phase_p = np.zeros(n_ch)
    psi_s = np.ones(k, np.complex128)
    xi_s = np.ones(k, np.complex128)
    gain_s = np.zeros(n_ch)
    phase_s = np.zeros(n_ch)
    skips = 0
    st_updates = 0
    bias_count = 0
    for i in range(n_iter):
        ti = i if varying == 1 else 0
        if use_x_in == 1:
            for m in range(k):
                x[m] = x_in[i, m]
        else:
            peak = _synth_scene(i, q1s, q2s, p_db, s_db, phases, doas, spacing, s_true)
            sigma = peak * sigma_scale
            for m in range(k):
                x[m] = psi_rows[ti, m] * s_true[m]
                if use_noise == 1:
                    x[m] += sigma * noise[i, m]
        mu0 = mu_rows[i]
        if run_prop == 1:
            if exact_recon == 1:
                for m in range(k):
                    s_hat[m] = s_true[m]
                n_found = 1
            else:
                for m in range(k):
                    x_pd[m] = x[m] / xi_p[m]
                n_found = _clean(x_pd, w, grid, stop_lin, max_targets, amps_buf, freqs_buf)
                for m in range(k):
                    acc = complex(0.0, 0.0)
                    for j in range(n_found):
                        ang = TWO_PI * freqs_buf[j] * m
                        acc += amps_buf[j] * complex(np.cos(ang), np.sin(ang))
                    s_hat[m] = acc
            if n_found == 0:
                skips += 1
            else:
                updated = _nlms(psi_p, s_hat, x, mu0)
                if updated == 0:
                    skips += 1
                else:
                    _canon(psi_p, xi_p, gain_p, phase_p)
                    _txrx(xi_p, k_t, k_r, gain_p, phase_p, k)
            if record_err == 1:
                for c in range(n_ch):
                    p_err_gain[i, c] = gain_p[c] - truth_gain[ti, c]
                    p_err_phase[i, c] = phase_p[c] - truth_phase[ti, c]
                if use_x_in == 0:
                    acc = 0.0
                    for m in range(k):
                        d = s_hat[m] - s_true[m]
                        acc += d.real * d.real + d.imag * d.imag
                    p_rec_err[i] = np.sqrt(acc)
            if record_xi == 1:
                for m in range(k):
                    p_xi_trace[i, m] = xi_p[m]
            if bias_from >= 0 and i >= bias_from and use_x_in == 0:
                energy = 0.0
                for m in range(k):
                    energy += s_hat[m].real * s_hat[m].real + s_hat[m].imag * s_hat[m].imag
                if energy > 0.0:
                    for m in range(k):
                        u1_sum[m] += (
                            s_hat[m].real * s_hat[m].real + s_hat[m].imag * s_hat[m].imag
                        ) / energy
                        r_m = s_hat[m] - s_true[m]
                        u2_sum[m] += np.conj(s_hat[m]) * r_m / energy
                        err_psi_sum[m] += psi_p[m] - psi_rows[ti, m]
                    bias_count += 1
        if run_st == 1:
            for m in range(k):
                x_pd[m] = x[m] / xi_s[m]
            n_found = _clean(x_pd, w, grid, stop_lin, max_targets, amps_buf, freqs_buf)
            if n_found == 1:
                for m in range(k):
                    ang = TWO_PI * freqs_buf[0] * m
                    s_hat[m] = amps_buf[0] * complex(np.cos(ang), np.sin(ang))
                updated = _nlms(psi_s, s_hat, x, mu0)
                if updated == 1:
                    st_updates += 1
                    _canon(psi_s, xi_s, gain_s, phase_s)
                    _txrx(xi_s, k_t, k_r, gain_s, phase_s, k)
            if record_err == 1:
                for c in range(n_ch):
                    s_err_gain[i, c] = gain_s[c] - truth_gain[ti, c]
                    s_err_phase[i, c] = phase_s[c] - truth_phase[ti, c]
            if record_xi == 1:
                for m in range(k):
                    s_xi_trace[i, m] = xi_s[m]
    for m in range(k):
        p_psi_final[m] = psi_p[m]
        p_xi_final[m] = xi_p[m]
        s_psi_final[m] = psi_s[m]
        s_xi_final[m] = xi_s[m]
    return skips, st_updates, bias_count


@njit(cache=True)
def sbb_trial(
    w,
    grid,
    spacing,
    q1s,
    q2s,
    p_db,
    s_db,
    phases,
    doas,
    noise,
    use_noise,
    sigma_scale,
    psi_rows,
    varying,
    mu_cal_rows,
    mu_fast,
    combined,
    stop_lin,
    max_targets,
    delta_rad,
    k_t,
    k_r,
    record_trace,
    trace_phase,
):
    """One detection trial: standalone fast bank, or the combined structure.

    Returns (first_cross_index, rx_mask, tx_mask, skips); the index is
    0-based (-1 when no crossing). Masks are bitmasks of the channels
    whose factored phase exceeded the threshold at that iteration.
    """
    n_iter = mu_cal_rows.shape[0]
    k = w.shape[1]
    n_ch = k + k_t + k_r
    s_true = np.empty(k, np.complex128)
    x = np.empty(k, np.complex128)
    x_pd = np.empty(k, np.complex128)
    s_hat = np.empty(k, np.complex128)
    amps_buf = np.empty(max_targets, np.complex128)
    freqs_buf = np.empty(max_targets)
    psi_cal = np.ones(k, np.complex128)
    xi_cal = np.ones(k, np.complex128)
    gain_cal = np.zeros(n_ch)
    phase_cal = np.zeros(n_ch)
    psi_fast = np.ones(k, np.complex128)
    xi_fast = np.ones(k, np.complex128)
    gain_fast = np.zeros(n_ch)
    phase_fast = np.zeros(n_ch)
    skips = 0
    first_cross = -1
    rx_mask = 0
    tx_mask = 0
    for i in range(n_iter):
        ti = i if varying == 1 else 0
        peak = _synth_scene(i, q1s, q2s, p_db, s_db, phases, doas, spacing, s_true)
        sigma = peak * sigma_scale
        for m in range(k):
            x[m] = psi_rows[ti, m] * s_true[m]
            if use_noise == 1:
                x[m] += sigma * noise[i, m]
        if combined == 1:
            for m in range(k):
                x_pd[m] = x[m] / xi_cal[m]
        else:
            for m in range(k):
                x_pd[m] = x[m] / xi_fast[m]
        n_found = _clean(x_pd, w, grid, stop_lin, max_targets, amps_buf, freqs_buf)
        if n_found == 0:
            skips += 1
        else:
            for m in range(k):
                acc = complex(0.0, 0.0)
                for j in range(n_found):
                    ang = TWO_PI * freqs_buf[j] * m
                    acc += amps_buf[j] * complex(np.cos(ang), np.sin(ang))
                s_hat[m] = acc
            if combined == 1:
                if _nlms(psi_cal, s_hat, x, mu_cal_rows[i]) == 1:
                    _canon(psi_cal, xi_cal, gain_cal, phase_cal)
            if _nlms(psi_fast, s_hat, x, mu_fast) == 1:
                _canon(psi_fast, xi_fast, gain_fast, phase_fast)
                _txrx(xi_fast, k_t, k_r, gain_fast, phase_fast, k)
        if record_trace == 1:
            for c in range(k_t + k_r):
                trace_phase[i, c] = phase_fast[k + c]
        if first_cross < 0:
            crossed = False
            for r in range(k_r):
                if np.abs(phase_fast[k + k_t + r]) > delta_rad:
                    rx_mask |= 1 << r
                    crossed = True
            for t in range(k_t):
                if np.abs(phase_fast[k + t]) > delta_rad:
                    tx_mask |= 1 << t
                    crossed = True
            if crossed:
                first_cross = i
    return first_cross, rx_mask, tx_mask, skips
