"""Built-in test systems (all in units with ``G = 1`` unless stated)."""
from __future__ import annotations

import numpy as np

from ..geometry import rot_x
from ..rigidbody import BodyParams, BodyState, SystemParams, SystemState


def _kepler_pair(m1, m2, a, e, G=1.0):
    """Two bodies at pericentre of a Keplerian ellipse in the xy plane, centre of mass at rest."""
    mu = G * (m1 + m2)
    r0 = a * (1.0 - e)
    v = np.sqrt(mu * (1.0 + e) / r0)
    m = m1 + m2
    q1 = np.array([-m2 / m * r0, 0.0, 0.0])
    q2 = np.array([m1 / m * r0, 0.0, 0.0])
    p = m1 * m2 / m * v * np.array([0.0, 1.0, 0.0])
    return q1, -p, q2, p


def toy_two_body(tilt=0.3, Pi=(1.2, 0.0, 3.6), e=0.2):
    """Fast-spinning oblate primary and a small triaxial companion.

    The primary's spin axis is tilted by ``tilt`` from the orbit normal, so
    the quadrupole coupling makes the orbit precess and the spin nutate.
    """
    params = SystemParams((BodyParams(1.0, (0.04, 0.04, 0.06)), BodyParams(0.1, (0.002, 0.0025, 0.003))))
    q1, p1, q2, p2 = _kepler_pair(1.0, 0.1, 1.0, e)
    state = SystemState(0.0, (
        BodyState(q1, p1, rot_x(tilt), np.array(Pi, dtype=float)),
        BodyState(q2, p2, np.eye(3), np.array([0.0, 0.01, 0.02])),
    ))
    return params, state


def kepler_point_pair(e=0.3):
    """Two equal spheres on an eccentric orbit, no spin: a pure translation problem."""
    params = SystemParams((BodyParams(1.0, (1.0, 1.0, 1.0)), BodyParams(1.0, (1.0, 1.0, 1.0))))
    q1, p1, q2, p2 = _kepler_pair(1.0, 1.0, 1.0, e)
    zero = np.zeros(3)
    return params, SystemState(0.0, (BodyState(q1, p1, np.eye(3), zero), BodyState(q2, p2, np.eye(3), zero)))


def free_top(J=(1.0, 2.0, 3.0), Pi=(1.0, 0.6, 0.8)):
    """Single asymmetric body with no potential."""
    params = SystemParams((BodyParams(1.0, J),))
    zero = np.zeros(3)
    return params, SystemState(0.0, (BodyState(zero, zero, np.eye(3), np.array(Pi, dtype=float)),))


# Units: AU, yr, solar masses.
G_ASTRO = 4.0 * np.pi**2


def trappist_like():
    """A TRAPPIST-like star + 7 planet system.

    This is NOT the real TRAPPIST-1 configuration.  Masses and periods are of
    the right order (innermost period about 4e-3 yr); planets start on
    circular coplanar orbits with spin axes slightly tilted.
    """
    m_star = 0.09
    periods = np.array([1.51, 2.42, 4.05, 6.10, 9.21, 12.35, 18.77]) / 365.25
    m_planets = np.array([1.37, 1.31, 0.39, 0.69, 1.04, 1.32, 0.33]) * 3.0e-6
    r_star, r_planet = 5.5e-4, 4.0e-5
    bodies = [BodyParams(m_star, (0.08 * m_star * r_star**2,) * 2 + (0.085 * m_star * r_star**2,))]
    for m in m_planets:
        bodies.append(BodyParams(m, (0.33 * m * r_planet**2, 0.33 * m * r_planet**2, 0.34 * m * r_planet**2)))
    params = SystemParams(tuple(bodies), G_ASTRO)
    states = []
    p_total = np.zeros(3)
    for k, (T, m) in enumerate(zip(periods, m_planets)):
        a = (G_ASTRO * (m_star + m) * T**2 / (4 * np.pi**2)) ** (1.0 / 3.0)
        phase = 2.0 * np.pi * k / 7.0
        q = a * np.array([np.cos(phase), np.sin(phase), 0.0])
        v = np.sqrt(G_ASTRO * (m_star + m) / a) * np.array([-np.sin(phase), np.cos(phase), 0.0])
        spin = bodies[k + 1].inertia[2] * 2.0 * np.pi / T
        states.append(BodyState(q, m * v, rot_x(0.05 * (k + 1)), np.array([0.0, 0.0, spin])))
        p_total += m * v
    star_spin = bodies[0].inertia[2] * 2.0 * np.pi / (3.3 / 365.25)
    star = BodyState(np.zeros(3), -p_total, np.eye(3), np.array([0.0, 0.0, star_spin]))
    return params, SystemState(0.0, (star, *states))


SYSTEMS = {"toy_two_body": toy_two_body, "kepler_point_pair": kepler_point_pair, "free_top": free_top, "trappist_like": trappist_like}
