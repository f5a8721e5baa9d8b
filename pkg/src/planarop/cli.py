"""Batch front end: ``planarop SUBCOMMAND CONFIG``.

Config files are flat ``key = value`` lines with ``#`` comments.  Exit codes:
0 success, 2 configuration error (the message names the key), 3 numerical
failure (the message names the failed invariant).
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .engine import EngineParams, coeffs_via_jets, iterate, lipschitz_budget
from .errors import ConfigError, ConvergenceError, DomainError, GeometryError, NumericalError, PrecisionError, UsageError
from .geometry import PotentialSpec, build_geometry
from .oracle import (
    berezin_density,
    berezin_potential,
    berezin_zeros,
    build_quadrature,
    compare_prediction,
    orthonormalize,
    predicted_orthogonality,
    verify_berezin_system,
)
from .wavefield import WaveConfig, build_potential_U, solve_wave

SUBCOMMANDS = ("geometry", "solve", "predict", "oracle", "berezin", "compare", "budget")


def _auto_int(v):
    return "auto" if v.strip().lower() == "auto" else int(v)


def _auto_float(v):
    return "auto" if v.strip().lower() == "auto" else float(v)


def _complex_list(v):
    return [complex(x.strip().replace(" ", "")) for x in v.split(",") if x.strip()]


def _rows(v):
    return [tuple(x.strip() for x in row.split(",")) for row in v.split(";") if row.strip()]


KEYS = {
    "potential": str,
    "t": float,
    "tau": float,
    "m": int,
    "N": int,
    "R": int,
    "jet_order": int,
    "iterations": _auto_int,
    "variant": str,
    "sigma_star": float,
    "sigma": float,
    "sigma_prime": float,
    "theta": float,
    "radius": _auto_float,
    "nodes_r": _auto_int,
    "nodes_theta": _auto_int,
    "digits": int,
    "n_max": _auto_int,
    "probes": _complex_list,
    "z": complex,
    "output_dir": str,
    "custom_q": _rows,
    "custom_psi": _rows,
}


@dataclass
class RunConfig:
    potential: str = "ginibre"
    t: float = 0.0
    tau: float = 1.0
    m: int = 16
    N: int = 24
    R: int = 40
    jet_order: int = 2
    iterations: object = "auto"
    variant: str = "thm-main"
    sigma_star: float = 0.2
    sigma: float | None = None
    sigma_prime: float | None = None
    theta: float | None = None
    radius: object = "auto"
    nodes_r: object = "auto"
    nodes_theta: object = "auto"
    digits: int = 50
    n_max: object = "auto"
    probes: list = field(default_factory=list)
    z: complex | None = None
    output_dir: str = "."
    custom_q: list = field(default_factory=list)
    custom_psi: list = field(default_factory=list)
    given: set = field(default_factory=set)

    @property
    def n(self):
        n = round(self.tau * self.m)
        if abs(self.tau * self.m - n) > 1e-9:
            raise ConfigError("tau", f"tau*m = {self.tau * self.m!r} is not an integer")
        return int(n)

    def spec(self):
        q = tuple((int(a), int(b), float(re) + 1j * float(im)) for a, b, re, im in self.custom_q) \
            if self.custom_q else ()
        psi = tuple((int(k), float(re) + 1j * float(im)) for k, re, im in self.custom_psi) \
            if self.custom_psi else ()
        return PotentialSpec(self.potential, self.t, q, psi)

    def wave(self):
        return WaveConfig(m=self.m, tau=self.tau, variant=self.variant, jet_order=self.jet_order,
                          sigma_star=self.sigma_star)

    def oracle_nmax(self, need):
        return need if self.n_max == "auto" else max(int(self.n_max), need)


def parse_config(text):
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(key, "unknown configuration key")
        try:
            val = KEYS[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"cannot parse {value!r}: {exc}") from exc
        setattr(cfg, key, val)
        cfg.given.add(key)
    if cfg.variant not in ("thm-main", "section-8"):
        raise ConfigError("variant", "must be thm-main or section-8")
    if cfg.m < 1:
        raise ConfigError("m", "must be a positive integer")
    if not 0 < cfg.tau <= 1:
        raise ConfigError("tau", "must lie in (0, 1]")
    if cfg.jet_order < 0:
        raise ConfigError("jet_order", "must be >= 0")
    cfg.spec()  # validates potential, t and custom tables
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# output helpers


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _geometry(cfg):
    return build_geometry(cfg.spec(), cfg.tau, N=cfg.N, R=cfg.R)


# ---------------------------------------------------------------------------
# subcommands


def cmd_geometry(cfg, out):
    geom = _geometry(cfg)
    th = np.linspace(0, 2 * np.pi, 128, endpoint=False)
    g = geom.psi(np.exp(1j * th))
    _write_csv(os.path.join(out, "gamma.csv"), ["theta", "re_z", "im_z"], zip(th, g.real, g.imag))
    rs = np.linspace(math.exp(-geom.work_band.sigma), math.exp(geom.work_band.sigma), 41)
    rs = rs[rs > geom.chart_radius * 1.05]
    zr = geom.psi(rs.astype(complex))
    V = geom.V_exact(zr, rs.astype(complex))
    _write_csv(os.path.join(out, "rays.csv"), ["r", "V"], zip(np.abs(zr), V))
    _write_text(os.path.join(out, "validation.txt"), geom.report.text())
    for name, ok, margin, _ in geom.report.checks:
        print(f"{name}: {'pass' if ok else 'FAIL'} ({margin:.3e})")
    return 0


def _theta(cfg):
    return cfg.theta if cfg.theta is not None else 1.0 / cfg.m


def _budget(cfg, geom):
    s = cfg.sigma if cfg.sigma is not None else cfg.sigma_star
    sp = cfg.sigma_prime if cfg.sigma_prime is not None else s / 2
    return lipschitz_budget(geom, s, sp, _theta(cfg), sigma_star=cfg.sigma_star)


def cmd_solve(cfg, out):
    geom = _geometry(cfg)
    params = EngineParams(theta=_theta(cfg), sigma_star=cfg.sigma_star, iterations=cfg.iterations)
    table = iterate(geom, params)
    rows = [(k, r, table.tails[min(k, len(table.tails) - 1)]) for k, r in enumerate(table.residuals)]
    _write_csv(os.path.join(out, "residuals.csv"), ["k", "residual", "tail_mass"], rows)
    jets = coeffs_via_jets(geom, cfg.jet_order)
    crow = []
    for j, h in enumerate(jets.hhat):
        D = h.data.degree
        for d in range(-D, D + 1):
            c = complex(h.data.coeffs[0][d + D])
            if c != 0:
                crow.append((j, d, c.real, c.imag))
    _write_csv(os.path.join(out, "coeffs_h.csv"), ["j", "d", "re", "im"], crow)
    bd = _budget(cfg, geom)
    _write_text(os.path.join(out, "budget.txt"), bd.text())
    print(f"iterations: {len(table.residuals)} stop={table.stop_reason}")
    print(f"final residual: {table.residuals[-1]:.3e}")
    print(f"h0 mean: {float(jets.hhat[0].data.mode(0).real)!r}")
    return 0


def _field_points(cfg, geom):
    s = cfg.sigma_star / 2
    rad = np.exp(np.linspace(-s, s, 9))
    th = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    z = geom.psi(np.multiply.outer(rad, np.exp(1j * th))).ravel()
    if cfg.probes:
        z = np.concatenate([z, np.asarray(cfg.probes, dtype=complex)])
    return z


def cmd_predict(cfg, out):
    geom = _geometry(cfg)
    wc = cfg.wave()
    sol = solve_wave(geom, wc)
    fs = build_potential_U(geom, sol, wc, _field_points(cfg, geom))
    _write_csv(os.path.join(out, "field.csv"), ["re_z", "im_z", "V", "h", "hstar", "wave_pred", "P_re", "P_im", "U"],
               fs.rows())
    print(f"field points: {fs.z.size}")
    return 0


def _basis(cfg, n_max):
    rule = build_quadrature(cfg.spec(), cfg.m, n_max=n_max, digits=cfg.digits, radius=cfg.radius,
                            nodes_r=None if cfg.nodes_r == "auto" else cfg.nodes_r,
                            nodes_theta=None if cfg.nodes_theta == "auto" else cfg.nodes_theta)
    return orthonormalize(rule, n_max)


def _mpstr(x, digits):
    return mpmath.nstr(x, digits)


def cmd_oracle(cfg, out):
    n_max = cfg.oracle_nmax(cfg.n)
    b = _basis(cfg, n_max)
    d = cfg.digits
    with mpmath.workdps(d):
        _write_csv(os.path.join(out, "gram.csv"), ["j", "k", "re", "im"],
                   ((j, k, _mpstr(b.gram[j, k].real, d), _mpstr(b.gram[j, k].imag, d))
                    for j in range(n_max + 1) for k in range(n_max + 1)))
        _write_csv(os.path.join(out, "basis.csv"), ["k", "j", "re", "im"],
                   ((k, j, _mpstr(mpmath.re(b.coeffs_mp[k, j]), d), _mpstr(mpmath.im(b.coeffs_mp[k, j]), d))
                    for k in range(n_max + 1) for j in range(k + 1)))
        _write_csv(os.path.join(out, "kappa.csv"), ["k", "kappa"],
                   ((k, _mpstr(b.kappa[k], d)) for k in range(n_max + 1)))
    print(f"orthonormality residual: {b.residual:.3e}")
    return 0


def cmd_berezin(cfg, out):
    if cfg.z is None:
        raise ConfigError("z", "berezin needs a source point z")
    n = cfg.n
    b = _basis(cfg, cfg.oracle_nmax(n - 1))
    zs = berezin_zeros(b, cfg.z, n)
    _write_csv(os.path.join(out, "zeros.csv"), ["re_w", "im_w"], ((w.real, w.imag) for w in zs.roots))
    R = b.rule.R
    xs = np.linspace(-R, R, 41)
    grid = (xs[None, :] + 1j * xs[:, None]).ravel()
    B = berezin_density(b, cfg.z, grid, n)
    _write_csv(os.path.join(out, "density.csv"), ["re_w", "im_w", "B"], zip(grid.real, grid.imag, B))
    probes = cfg.probes or [10, 20, 40]
    pot = [(complex(w).real, complex(w).imag, berezin_potential(b, cfg.z, complex(w), n)) for w in probes]
    _write_csv(os.path.join(out, "potential.csv"), ["re_w", "im_w", "potential"], pot)
    rep = verify_berezin_system(b, cfg.z, n)
    print(f"zeros: {len(zs.roots)} singular={zs.singular}")
    print(f"q norm: {rep['q_norm']!r}")
    return 0


def cmd_budget(cfg, out):
    geom = _geometry(cfg)
    bd = _budget(cfg, geom)
    _write_text(os.path.join(out, "budget.txt"), bd.text())
    print(f"C2 = {bd.C2:.3e}, k_cap = {bd.k_cap}, rho0 = {bd.rho0:.3e}")
    return 0


def compare_pipeline(cfg, out):
    """solve -> predict -> oracle -> compare; writes summary.csv and report.txt."""
    if not cfg.probes:
        raise ConfigError("probes", "compare needs at least one probe point")
    geom = _geometry(cfg)
    wc = cfg.wave()
    sol = solve_wave(geom, wc)
    b = _basis(cfg, cfg.oracle_nmax(wc.n))
    cmp_probe = compare_prediction(b, geom, sol, wc, cfg.probes)
    cmp_gamma = compare_prediction(b, geom, sol, wc)
    orth = predicted_orthogonality(b, geom, sol, wc)
    checks = [
        ("orthonormality_residual", b.residual, 1e-10),
        ("wave_error_probes", cmp_probe["sup_err_wave"], 0.05),
        ("wave_error_gamma", cmp_gamma["sup_err_wave"], 0.05),
        ("P_error_gamma", cmp_gamma["sup_err_P"], 0.05),
        ("predicted_orthogonality", orth["relative"], 1e-3),
    ]
    rows = [(name, val, tol, "true" if val <= tol else "false") for name, val, tol in checks]
    _write_csv(os.path.join(out, "summary.csv"), ["check", "value", "tolerance", "pass"], rows)
    lines = [f"potential = {cfg.potential}", f"tau = {cfg.tau!r}", f"m = {cfg.m}", f"n = {wc.n}",
             f"variant = {wc.variant}", f"jet_order = {wc.jet_order}"]
    lines += [f"{name} = {val!r} (tolerance {tol!r}) {'pass' if ok == 'true' else 'FAIL'}"
              for name, val, tol, ok in rows]
    lines.append(f"orthogonality_cosine = {orth['cosine']!r}")
    lines.append(f"fitted_phase = {cmp_gamma['phase']!r}")
    _write_text(os.path.join(out, "report.txt"), "\n".join(lines) + "\n")
    for name, val, tol, ok in rows:
        print(f"{name}: {'pass' if ok == 'true' else 'FAIL'} ({val:.3e} <= {tol:.0e})")
    return 0 if all(r[3] == "true" for r in rows) else 3


COMMANDS = {
    "geometry": cmd_geometry,
    "solve": cmd_solve,
    "predict": cmd_predict,
    "oracle": cmd_oracle,
    "berezin": cmd_berezin,
    "compare": compare_pipeline,
    "budget": cmd_budget,
}


def run(config_path, subcommand, output_dir=None):
    """Dispatch and translate failures into the exit-code contract."""
    try:
        if subcommand not in COMMANDS:
            raise ConfigError("subcommand", f"unknown subcommand {subcommand!r}")
        cfg = load_config(config_path)
        out = output_dir or cfg.output_dir
        print(f"n = {cfg.n} (round(tau*m), tau = {cfg.tau!r}, m = {cfg.m})")
        os.makedirs(out, exist_ok=True)
        return COMMANDS[subcommand](cfg, out)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, GeometryError, DomainError, ConvergenceError) as exc:
        advice = " (raise digits)" if isinstance(exc, PrecisionError) and "digits" not in str(exc) else ""
        print(f"numerical failure [{type(exc).__name__}]: {exc}{advice}", file=sys.stderr)
        return 3
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


def main(argv=None):
    p = argparse.ArgumentParser(prog="planarop", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("config")
    p.add_argument("-o", "--output-dir", default=None)
    args = p.parse_args(argv)
    return run(args.config, args.subcommand, args.output_dir)


if __name__ == "__main__":
    sys.exit(main())
