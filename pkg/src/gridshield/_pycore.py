"""Pure-Python simulation kernel.

Advances the packed plant state through blocks of fixed steps between
dispatch boundaries. The compiled kernel in _core.pyx is a line-for-line twin
of this module; keep the arithmetic and its ordering identical in both.

State layout (float64):
    per generator (11): omega, i_d, i_q, vc_d, vc_q, pi_int, ph1, ph2, ph3,
                        vf_d, vf_q
    per load (2):       il_d, il_q
    battery (2):        soc, v_p

Generator param row (19): tau, damping, r, l, c, poles, k_p, k_i, k, alpha,
    gamma, k1, t_max, s1, s2, s3, vcr_d, vcr_q, omega_ref
Load param row (5): r_l, l_l, rho, k, eps
Battery params (8): r_b, r_p, c_p, q_b, beta1, beta2, p_max, vdc_floor
Attack params (6): kind, magnitude_fraction, start, duration, ramp_rate, freq

Error codes returned: 0 ok, 1 divergence, 2 state of charge out of [0, 1].
"""

from __future__ import annotations

import math

BACKEND_NAME = "python"

_CONFLUENT_RTOL = 1e-9
_SERIES_CUTOFF = 1e-5
_EXP_CLAMP = 700.0


def _cexp(z):
    a = math.exp(min(z.real, _EXP_CLAMP))
    return complex(a * math.cos(z.imag), a * math.sin(z.imag))


def _csqrt(z):
    m = math.hypot(z.real, z.imag)
    if m == 0.0:
        return 0j
    half = 0.5 * math.atan2(z.imag, z.real)
    s = math.sqrt(m)
    return complex(s * math.cos(half), s * math.sin(half))


def _phi(lam, dt):
    z = lam * dt
    if abs(z) < _SERIES_CUTOFF:
        return dt * (1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0)
    return (_cexp(z) - 1.0) / lam


def _psi(lam, dt):
    z = lam * dt
    if abs(z) < _SERIES_CUTOFF:
        return dt * dt * (0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0)
    e = _cexp(z)
    return (dt * e - (e - 1.0) / lam) / lam


def _affine_step(m11, m12, m21, m22, u1, u2, x1, x2, dt):
    tr = m11 + m22
    det = m11 * m22 - m12 * m21
    disc = _csqrt(tr * tr - 4.0 * det)
    l1 = 0.5 * (tr + disc)
    l2 = 0.5 * (tr - disc)
    if abs(l1 - l2) <= _CONFLUENT_RTOL * (abs(l1) + abs(l2) + 1e-30):
        lam = 0.5 * tr
        e = _cexp(lam * dt)
        ph = _phi(lam, dt)
        ps = _psi(lam, dt)
        n11 = m11 - lam
        n22 = m22 - lam
        nx1 = n11 * x1 + m12 * x2
        nx2 = m21 * x1 + n22 * x2
        nu1 = n11 * u1 + m12 * u2
        nu2 = m21 * u1 + n22 * u2
        return (e * (x1 + dt * nx1) + ph * u1 + ps * nu1,
                e * (x2 + dt * nx2) + ph * u2 + ps * nu2)
    e1 = _cexp(l1 * dt)
    e2 = _cexp(l2 * dt)
    f1 = _phi(l1, dt)
    f2 = _phi(l2, dt)
    inv = 1.0 / (l1 - l2)
    mx1 = m11 * x1 + m12 * x2
    mx2 = m21 * x1 + m22 * x2
    p1x1 = (mx1 - l2 * x1) * inv
    p1x2 = (mx2 - l2 * x2) * inv
    mu1 = m11 * u1 + m12 * u2
    mu2 = m21 * u1 + m22 * u2
    p1u1 = (mu1 - l2 * u1) * inv
    p1u2 = (mu2 - l2 * u2) * inv
    return (e1 * p1x1 + e2 * (x1 - p1x1) + f1 * p1u1 + f2 * (u1 - p1u1),
            e1 * p1x2 + e2 * (x2 - p1x2) + f1 * p1u2 + f2 * (u2 - p1u2))


def _attack_w(kind, mag_frac, start, duration, ramp_rate, freq, t, p_true):
    if kind == 0:
        return 0.0
    mag = mag_frac * p_true
    if kind == 1:
        return mag if t >= start else 0.0
    if not (start <= t < start + duration):
        return 0.0
    if kind == 2:
        return mag
    if kind == 3:
        v = ramp_rate * (t - start)
        return v if v < mag else mag
    return mag * math.sin(2.0 * math.pi * freq * (t - start))


def run_block(state, gp, lp, bp, ir, iref, sp_w, status_code, attack,
              dt, omega_floor, use_battery, div_limit,
              t0, gstep0, n_steps, log_every, log, log_row0):
    """Advance n_steps of the two-rate plant loop; returns
    (rows_written, err_code, err_step)."""
    ng = gp.shape[0]
    nl = lp.shape[0]
    base_l = ng * 11
    base_b = base_l + nl * 2
    rb, rp, cp, qb = bp[0], bp[1], bp[2], bp[3]
    pmax, vdc_floor = bp[6], bp[7]
    ak = int(attack[0])
    amag, astart, adur, arate, afreq = attack[1], attack[2], attack[3], attack[4], attack[5]
    evp = math.exp(-dt / (rp * cp))
    rows = 0

    for n in range(n_steps):
        # bus snapshot and start-of-step powers
        sum_vd = 0.0
        sum_vq = 0.0
        p_gens = 0.0
        omega_e_bus = 0.0
        for g in range(ng):
            o = g * 11
            sum_vd += state[o + 3]
            sum_vq += state[o + 4]
            p_gens += 0.5 * (state[o + 3] * state[o + 1] + state[o + 4] * state[o + 2])
            omega_e_bus += gp[g, 5] * state[o] / 2.0
        vbus_d = sum_vd / ng
        vbus_q = sum_vq / ng
        omega_e_bus /= ng
        vdc = math.hypot(vbus_d, vbus_q)
        p_load = 0.0
        for j in range(nl):
            o = base_l + 2 * j
            p_load += 0.5 * (vbus_d * state[o] + vbus_q * state[o + 1])

        # battery inverter: serves the locally sensed bus imbalance, which
        # equals its dispatch setpoint whenever the meters are honest
        if use_battery != 0.0 and vdc >= vdc_floor:
            p_cmd = p_load - p_gens
            if p_cmd > pmax:
                p_cmd = pmax
            elif p_cmd < -pmax:
                p_cmd = -pmax
            ib = p_cmd / vdc
        else:
            ib = 0.0

        # generators
        for g in range(ng):
            o = g * 11
            omega = state[o]
            id_ = state[o + 1]
            iq = state[o + 2]
            vcd = state[o + 3]
            vcq = state[o + 4]
            pint = state[o + 5]
            ph1 = state[o + 6]
            ph2 = state[o + 7]
            ph3 = state[o + 8]
            vfd = state[o + 9]
            vfq = state[o + 10]
            tau = gp[g, 0]
            damping = gp[g, 1]
            r = gp[g, 2]
            l = gp[g, 3]
            c = gp[g, 4]
            z = gp[g, 5]
            kp = gp[g, 6]
            ki = gp[g, 7]
            kk = gp[g, 8]
            alpha = gp[g, 9]
            gamma = gp[g, 10]
            k1 = gp[g, 11]
            tmax = gp[g, 12]
            s1 = gp[g, 13]
            s2 = gp[g, 14]
            s3 = gp[g, 15]
            vrd = gp[g, 16]
            vrq = gp[g, 17]
            oref = gp[g, 18]
            ird = ir[g, 0]
            irq = ir[g, 1]

            omega_e = z * omega / 2.0
            if omega_e > omega_floor or omega_e < -omega_floor:
                te = (vrd * id_ + vrq * iq) / omega_e
            else:
                te = 0.0
            err = oref - omega
            pint_new = pint + err * dt
            traw = te + kp * err + ki * pint_new
            if traw < 0.0 or traw > tmax:
                pint_new = pint  # conditional integration against the clamp
                traw = te + kp * err + ki * pint_new
            tm = 0.0 if traw < 0.0 else (tmax if traw > tmax else traw)
            omega_new = omega + dt * (-damping * omega + tm - te) / tau

            ved = vcd - vrd
            veq = vcq - vrq
            efd = (vfd + k1 * ved) + alpha * ved
            efq = (vfq + k1 * veq) + alpha * veq
            w2 = omega_e * omega_e
            y1d = -s1 * id_
            y1q = -s1 * iq
            y2d = s2 * (2.0 * omega_e * iq - omega_e * irq + alpha * (id_ - ird))
            y2q = s2 * (-2.0 * omega_e * id_ + omega_e * ird + alpha * (iq - irq))
            y3d = s3 * (-w2 * vcd + alpha * omega_e * vcq)
            y3q = s3 * (-w2 * vcq - alpha * omega_e * vcd)
            dph1 = gamma * (y1d * efd + y1q * efq)
            dph2 = gamma * (y2d * efd + y2q * efq)
            dph3 = gamma * (y3d * efd + y3q * efq)

            dec = math.exp(-k1 * dt)
            vfd_new = dec * vfd + (1.0 - dec) * (-k1 * ved)
            vfq_new = dec * vfq + (1.0 - dec) * (-k1 * veq)

            th1 = s1 * ph1
            th2 = s2 * ph2
            th3 = s3 * ph3
            zi = complex(id_, -iq)
            zc = complex(vcd, -vcq)
            zr = complex(ird, -irq)
            zref = complex(vrd, -vrq)
            a_i = th1 - th2 * complex(alpha, 2.0 * omega_e) - kk / c
            a_c = th3 * complex(w2, -alpha * omega_e) - kk * complex(alpha, omega_e)
            b = th2 * zr * complex(alpha, omega_e) + (kk / c) * zr + (kk * alpha + 1.0) * zref
            m11 = (-r + a_i) / l + complex(0.0, omega_e)
            m12 = (a_c - 1.0) / l
            m21 = complex(1.0 / c)
            m22 = complex(0.0, omega_e)
            zi2, zc2 = _affine_step(m11, m12, m21, m22, b / l, -zr / c, zi, zc, dt)

            state[o] = omega_new
            state[o + 1] = zi2.real
            state[o + 2] = -zi2.imag
            state[o + 3] = zc2.real
            state[o + 4] = -zc2.imag
            state[o + 5] = pint_new
            state[o + 6] = ph1 + dt * dph1
            state[o + 7] = ph2 + dt * dph2
            state[o + 8] = ph3 + dt * dph3
            state[o + 9] = vfd_new
            state[o + 10] = vfq_new

        # loads
        for j in range(nl):
            o = base_l + 2 * j
            ild = state[o]
            ilq = state[o + 1]
            rl = lp[j, 0]
            ll = lp[j, 1]
            rho = lp[j, 2]
            kk = lp[j, 3]
            eps = lp[j, 4]
            ird = iref[j, 0]
            irq = iref[j, 1]
            sd = ild - ird
            sq = ilq - irq
            if eps > 0.0 and -eps <= sd <= eps:
                gd = rho / eps + kk
                offd = 0.0
            else:
                gd = kk
                offd = -rho if sd > 0.0 else (rho if sd < 0.0 else 0.0)
            if eps > 0.0 and -eps <= sq <= eps:
                gq = rho / eps + kk
                offq = 0.0
            else:
                gq = kk
                offq = -rho if sq > 0.0 else (rho if sq < 0.0 else 0.0)
            a11 = -(rl + gd) / ll
            a12 = omega_e_bus
            a21 = -omega_e_bus
            a22 = -(rl + gq) / ll
            ud = (gd * ird + offd - vbus_d) / ll
            uq = (gq * irq + offq - vbus_q) / ll
            z1, z2 = _affine_step(complex(a11), complex(a12), complex(a21), complex(a22),
                                  complex(ud), complex(uq), complex(ild), complex(ilq), dt)
            state[o] = z1.real
            state[o + 1] = z2.real

        # battery states
        soc = state[base_b]
        vp = state[base_b + 1]
        state[base_b + 1] = evp * vp + (1.0 - evp) * rp * ib
        soc_new = soc + dt * (-ib / (3600.0 * qb))
        state[base_b] = soc_new
        if not 0.0 <= soc_new <= 1.0:
            return rows, 2, n

        for idx in range(base_b + 2):
            v = state[idx]
            if not (-div_limit <= v <= div_limit):
                return rows, 1, n

        # decimated log row from the post-step state
        gs = gstep0 + n + 1
        if gs % log_every == 0:
            t_next = t0 + (n + 1) * dt
            sum_vd = 0.0
            sum_vq = 0.0
            for g in range(ng):
                o = g * 11
                sum_vd += state[o + 3]
                sum_vq += state[o + 4]
            vbd = sum_vd / ng
            vbq = sum_vq / ng
            vdc2 = math.hypot(vbd, vbq)
            p_load2 = 0.0
            for j in range(nl):
                o = base_l + 2 * j
                p_load2 += 0.5 * (vbd * state[o] + vbq * state[o + 1])
            w = _attack_w(ak, amag, astart, adur, arate, afreq, t_next, p_load2)
            row = log_row0 + rows
            col = 0
            log[row, col] = t_next
            col += 1
            for g in range(ng):
                log[row, col] = state[g * 11]
                col += 1
            log[row, col] = vdc2
            col += 1
            p_gens2 = 0.0
            for g in range(ng):
                o = g * 11
                pg = 0.5 * (state[o + 3] * state[o + 1] + state[o + 4] * state[o + 2])
                p_gens2 += pg
                log[row, col] = pg
                col += 1
            pb = vdc2 * ib
            log[row, col] = pb
            col += 1
            log[row, col] = p_load2
            col += 1
            log[row, col] = p_load2 + w
            col += 1
            log[row, col] = w
            col += 1
            log[row, col] = state[base_b]
            col += 1
            log[row, col] = ib
            col += 1
            for g in range(ng + 1):
                log[row, col] = sp_w[g]
                col += 1
            log[row, col] = status_code
            col += 1
            log[row, col] = (p_gens2 + pb) - p_load2
            rows += 1

    return rows, 0, -1
