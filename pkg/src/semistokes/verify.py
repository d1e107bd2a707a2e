"""Property suites behind ``semistokes verify``.

Each suite returns a list of :class:`Check` records.  The thresholds are
the acceptance tolerances; the fixtures are the standard coupled run
(``rho0 = 1 + 0.1 sin(2 pi x)``, trigonometric force, ``gamma = 1.4``) and
the field families of :mod:`semistokes.builtins`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import builtins
from .diagnostics import (energy_ledger, flux_pairing, jump_sums, negative_norm_curl,
                          time_continuity_bound, translation_norm, upwind_diffusion_bound,
                          velocity_l2_error)
from .errors import InvariantViolation
from .fespace import (DensityField, VelocityField, VorticityField, check_commuting,
                      check_commuting_curl, interp_Q, interp_Q_vector, operators)
from .hodge import decompose, poincare_constants
from .mesh import unit_square
from .momentum import FluidParams, solve_momentum
from .stepper import SimConfig, State, run, step
from .transport import (Renormalizer, assemble_transport, positivity_bound,
                        renormalized_residual, step_density)

LADDER = (8, 16, 32, 64)
SHIFTS = (1 / 4, 1 / 8, 1 / 16, 1 / 32)


@dataclass
class Check:
    suite: str
    name: str
    value: float
    limit: float
    relation: str = "<="          # value <relation> limit

    @property
    def passed(self):
        if not math.isfinite(self.value):
            return False
        return self.value <= self.limit if self.relation == "<=" else self.value >= self.limit

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} [{self.suite}] {self.name}: {self.value:.6g} {self.relation} {self.limit:.6g}"

    def as_row(self):
        return {"suite": self.suite, "name": self.name, "value": float(self.value),
                "relation": self.relation, "limit": float(self.limit), "passed": self.passed}


def standard_config(gamma=1.4, T=0.5, dt=None, coupling=builtins.STANDARD_COUPLING,
                    picard_tol=1e-11):
    params = FluidParams(gamma=gamma)
    if dt is not None:
        return SimConfig(params=params, dt=dt, T=T, picard_tol=picard_tol)
    return SimConfig(params=params, dt=None, T=T, c_coupling=coupling, picard_tol=picard_tol)


def standard_run(K, **kw):
    """The standard coupled fixture on ``unit_square(K)``."""
    return run(unit_square(K), builtins.density("sine"), builtins.force("trig"),
               standard_config(**kw))


def observed_orders(h, err):
    h, err = np.asarray(h, float), np.asarray(err, float)
    return np.log(err[:-1] / err[1:]) / np.log(h[:-1] / h[1:])


# --------------------------------------------------------------------------
# transport


def suite_transport(K=8, samples=20, seed=0):
    rng = np.random.default_rng(seed)
    mesh = unit_square(K)
    ops = operators(mesh)
    checks = []
    worst = {"offdiag": -np.inf, "colsum": 0.0, "mass": 0.0, "pos": np.inf, "quad": 0.0,
             "slack": np.inf}
    R2 = Renormalizer.power(2.0)
    R14 = Renormalizer.power(1.4)
    for _ in range(samples):
        u = VelocityField(mesh, rng.standard_normal(ops.M_V.shape[0]))
        dt = float(rng.uniform(0.01, 1.0))
        rho0 = DensityField(mesh, rng.uniform(0.1, 2.0, mesh.n_cells))
        A = assemble_transport(mesh, u, dt).tocoo()
        off = A.data[A.row != A.col]
        worst["offdiag"] = max(worst["offdiag"], off.max(initial=-np.inf))
        colsum = np.asarray(A.tocsr().sum(axis=0)).ravel()
        colabs = np.asarray(abs(A.tocsr()).sum(axis=0)).ravel()
        worst["colsum"] = max(worst["colsum"], (np.abs(colsum - mesh.areas) / colabs).max())
        rho1 = step_density(rho0, u, dt)
        worst["mass"] = max(worst["mass"], abs(rho1.integral() - rho0.integral()) / rho0.integral())
        worst["pos"] = min(worst["pos"], rho1.values.min() - positivity_bound(rho0, u, dt))
        b0 = mesh.areas @ rho0.values**2
        worst["quad"] = max(worst["quad"], abs(renormalized_residual(rho0, rho1, u, dt, R2)) / b0)
        worst["slack"] = min(worst["slack"], renormalized_residual(rho0, rho1, u, dt, R14))
    checks.append(Check("transport", "largest off-diagonal entry (M-matrix)", worst["offdiag"], 0.0))
    checks.append(Check("transport", "column sums minus areas (relative)", worst["colsum"], 1e-14))
    checks.append(Check("transport", "relative mass defect", worst["mass"], 1e-12))
    checks.append(Check("transport", "min rho - positivity bound", worst["pos"], 0.0, ">="))
    checks.append(Check("transport", "quadratic renormalization residual", worst["quad"], 1e-10))
    checks.append(Check("transport", "gamma=1.4 renormalization slack", worst["slack"], 0.0, ">="))
    # the centered flux is not an M-matrix for the same data: sign-convention guard
    u = VelocityField(mesh, rng.standard_normal(ops.M_V.shape[0]))
    C = assemble_transport(mesh, u, 0.5, centered=True).tocoo()
    checks.append(Check("transport", "centered variant has positive off-diagonals",
                        float(C.data[C.row != C.col].max()), 0.0, ">="))
    # stationary state: f = 0 and constant density is a fixed point after one iteration
    cfg = SimConfig(dt=0.1, T=0.1)
    state = State(0, 0.0, DensityField(mesh, np.full(mesh.n_cells, 1.3)),
                  VorticityField.zeros(mesh), VelocityField.zeros(mesh))
    new, rep = step(state, None, cfg)
    checks.append(Check("transport", "steady state: Picard iterations", rep.picard_iterations, 1))
    checks.append(Check("transport", "steady state: max |rho - rho0|",
                        float(np.abs(new.rho.values - 1.3).max()), 1e-14))
    return checks


# --------------------------------------------------------------------------
# energy and momentum


def suite_energy(K=16, steps=100, mms_ladder=LADDER):
    checks = []
    for gamma in (2.0, 1.4):
        traj = run(unit_square(K), builtins.density("sine"), builtins.force("trig"),
                   standard_config(gamma=gamma, T=1.0, dt=1.0 / steps))
        tag = f"gamma={gamma:g}"
        m0 = traj.states[0].rho.integral()
        reps = traj.reports
        checks.append(Check("energy", f"{tag} relative mass drift (max over steps)",
                            max(abs(r.mass - m0) for r in reps) / m0, 1e-12))
        checks.append(Check("energy", f"{tag} min rho - positivity bound (min over steps)",
                            min(r.min_density - r.positivity_bound for r in reps), 0.0, ">="))
        quad = Renormalizer.power(2.0)
        worst = 0.0
        for m in range(1, traj.M + 1):
            s0, s1 = traj.states[m - 1], traj.states[m]
            b0 = traj.mesh.areas @ s0.rho.values**2
            worst = max(worst, abs(renormalized_residual(s0.rho, s1.rho, s1.u, traj.dt, quad)) / b0)
        checks.append(Check("energy", f"{tag} quadratic renormalization residual", worst, 1e-10))
        checks.append(Check("energy", f"{tag} pairing identity residual",
                            max(r.pairing_residual for r in reps), 1e-9))
        checks.append(Check("energy", f"{tag} vorticity identity residual",
                            max(r.vorticity_residual for r in reps), 1e-9))
        checks.append(Check("energy", f"{tag} momentum residual / picard_tol",
                            max(r.momentum_residual for r in reps) / traj.config.picard_tol, 10.0))
        led = energy_ledger(traj)
        neg = min(float(getattr(led, k).min()) for k in
                  ("time_diss", "face_diss", "face_diss_lower", "u_sq", "div_sq", "w_sq", "curl_w_sq"))
        checks.append(Check("energy", f"{tag} smallest dissipation term", neg, 0.0, ">="))
        checks.append(Check("energy", f"{tag} per-step balance residual",
                            float(led.balance_residual().max()), 1e-9))
        if gamma != 2.0:
            checks.append(Check("energy", f"{tag} energy inequality slack",
                                float(led.inequality_slack().min()), -1e-8, ">="))
    # manufactured momentum solution
    ms = builtins.Manufactured(mu=1.0, lam=0.5)
    params = FluidParams(mu=ms.mu, lam=ms.lam, a=1.0, gamma=1.4)
    errs = []
    for k in mms_ladder:
        mesh = unit_square(k)
        p = interp_Q(mesh, ms.pressure).values
        rho = DensityField(mesh, (p / params.a) ** (1.0 / params.gamma))
        _, u = solve_momentum(mesh, rho, interp_Q_vector(mesh, ms.force), params)
        errs.append(velocity_l2_error(mesh, u, ms.velocity))
    orders = observed_orders([1.0 / k for k in mms_ladder], errs)
    checks.append(Check("energy", "manufactured velocity L2 order (min)", float(orders.min()), 0.9, ">="))
    return checks


# --------------------------------------------------------------------------
# hodge and commuting diagrams


def suite_hodge(ladder=(8, 16, 32), samples=100, seed=1):
    rng = np.random.default_rng(seed)
    rec = orth = div_c = curl_c = 0.0
    for K in ladder:
        mesh = unit_square(K)
        ops = operators(mesh)
        for _ in range(samples):
            u = VelocityField(mesh, rng.standard_normal(ops.M_V.shape[0]))
            parts = decompose(mesh, u)
            cz = parts.curl_part.coeffs
            nu2 = u.coeffs @ (ops.M_V @ u.coeffs)
            r = u.coeffs - cz - parts.z.coeffs
            rec = max(rec, math.sqrt(max(r @ (ops.M_V @ r), 0.0) / nu2))
            orth = max(orth, abs(cz @ (ops.M_V @ parts.z.coeffs)) / nu2)
        for _ in range(10):
            c = rng.standard_normal(6)
            v = lambda x, y, c=c: (c[0] + c[1] * x + c[2] * y, c[3] + c[4] * x + c[5] * y)
            dv = lambda x, y, c=c: c[1] + c[5] + 0.0 * x
            div_c = max(div_c, check_commuting(mesh, v, dv))
            psi = VorticityField(mesh, rng.standard_normal(ops.M_W.shape[0]))
            curl_c = max(curl_c, check_commuting_curl(mesh, psi))
    checks = [
        Check("hodge", "reconstruction ||u - curl zeta - z|| / ||u||", rec, 1e-12),
        Check("hodge", "orthogonality |(curl zeta, z)| / ||u||^2", orth, 1e-10),
        Check("hodge", "div commuting defect (degree <= 1)", div_c, 1e-12),
        Check("hodge", "curl commuting defect (P1_0 streams)", curl_c, 1e-12),
    ]
    c_div, c_curl = poincare_constants(unit_square(ladder[-1]))
    checks.append(Check("hodge", "C_div relative distance to 1/pi",
                        abs(c_div * math.pi - 1.0), 0.1))
    checks.append(Check("hodge", "C_curl relative distance to 1/(pi sqrt 2)",
                        abs(c_curl * math.pi * math.sqrt(2.0) - 1.0), 0.1))
    return checks


# --------------------------------------------------------------------------
# velocity compactness estimates


def translation_constants(ladder=LADDER, shifts=SHIFTS, direction=(1.0, 0.0)):
    """Measured ``||z - z(.-xi)||^2 / ((|xi| + |xi|^2) ||div z||^2)`` on the smooth family."""
    d = np.asarray(direction, float) / np.hypot(*direction)
    table = np.zeros((len(ladder), len(shifts)))
    for i, K in enumerate(ladder):
        mesh = unit_square(K)
        z = builtins.smooth_field(mesh)
        nd2 = mesh.areas @ z.div() ** 2
        for j, s in enumerate(shifts):
            table[i, j] = translation_norm(mesh, z, s * d) ** 2 / ((s + s * s) * nd2)
    return table


def jump_constants(ladder=LADDER):
    """``max jump / (h ||div z||)`` on the dipole family, ``h = 1/K``."""
    out = []
    for K in ladder:
        mesh = unit_square(K)
        z = builtins.dipole_field(mesh)
        mj, _ = jump_sums(mesh, z)
        out.append(mj / ((1.0 / K) * math.sqrt(mesh.areas @ z.div() ** 2)))
    return np.array(out)


def negative_norm_ratios(ladder=LADDER):
    """``||curl z||_{-1} / ||div z||`` on the smooth family."""
    out = []
    for K in ladder:
        mesh = unit_square(K)
        z = builtins.smooth_field(mesh)
        out.append(negative_norm_curl(mesh, z) / math.sqrt(mesh.areas @ z.div() ** 2))
    return np.array(out)


def suite_translation(ladder=LADDER):
    tab = translation_constants(ladder)
    jc = jump_constants(ladder)
    nr = negative_norm_ratios(ladder)
    orders = observed_orders([1.0 / k for k in ladder], nr)
    return [
        Check("translation", "translation constant spread (max/min)", float(tab.max() / tab.min()), 10.0),
        Check("translation", "negative-norm curl decay order (min)", float(orders.min()), 0.8, ">="),
        Check("translation", "jump constant spread (max/min)", float(jc.max() / jc.min()), 2.0),
    ]


# --------------------------------------------------------------------------
# effective flux and density estimates


def flux_table(ladder=LADDER, T=0.5):
    rows = []
    phi = lambda x, y: np.sin(math.pi * x) * y
    for K in ladder:
        traj = standard_run(K, T=T)
        ud, ub = upwind_diffusion_bound(traj, phi)
        tc, tb = time_continuity_bound(traj, phi)
        rows.append({"K": K, "h": traj.mesh.h, "dt": traj.dt, "M": traj.M,
                     "flux_pairing": flux_pairing(traj),
                     "upwind_ratio": ud / ub, "time_continuity_ratio": tc / tb,
                     "picard_max_iterations": max(r.picard_iterations for r in traj.reports)})
    I = [r["flux_pairing"] for r in rows]
    for i, r in enumerate(rows):
        r["cauchy_diff"] = abs(I[i] - I[i + 1]) if i + 1 < len(I) else float("nan")
    return rows


def suite_flux(ladder=LADDER):
    rows = flux_table(ladder)
    diffs = np.array([r["cauchy_diff"] for r in rows[:-1]])
    shrink = float(np.max(diffs[1:] / diffs[:-1]))
    up = np.array([r["upwind_ratio"] for r in rows])
    tc = np.array([r["time_continuity_ratio"] for r in rows])
    return [
        Check("flux", "largest ratio of successive Cauchy differences", shrink, 1.0 - 1e-12),
        Check("flux", "upwind diffusion ratio growth (max / first)", float(up.max() / up[0]), 2.0),
        Check("flux", "time continuity ratio growth (max / first)", float(tc.max() / tc[0]), 2.0),
    ]


SUITES = {
    "transport": suite_transport,
    "hodge": suite_hodge,
    "energy": suite_energy,
    "translation": suite_translation,
    "flux": suite_flux,
}


def run_suites(names=("all",), stop_on_failure=True, report=None):
    """Run suites in order; raises InvariantViolation on the first failed check."""
    if "all" in names:
        names = list(SUITES)
    checks = []
    for name in names:
        for c in SUITES[name]():
            checks.append(c)
            if report is not None:
                report(c)
            if stop_on_failure and not c.passed:
                raise InvariantViolation(c.line())
    return checks
