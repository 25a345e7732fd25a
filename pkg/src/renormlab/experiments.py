"""Config-driven experiment suites with deterministic artifacts.

A config names one experiment, the map family member, the flow field,
the observables, and every numeric knob; the seed fixes all sampled
points.  Runners emit JSON and CSV files that embed the config hash and
an artifact version, then a manifest with per-file checksums, so a
finished directory is self-describing and tamper-evident.
"""

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import torus
from .cohomology import (constant_speed_field, coboundary_estimate,
                         fourier_solve, lipschitz_diagnostic,
                         small_divisor_profile)
from .errors import ConfigInvalid
from .flow import (VectorFieldSpec, cocycle, eval_V, flow,
                   flow_with_jacobian, nu_product, transfer_observable)
from .functionals import (decompose, ergodic_integral,
                          ergodic_integral_sweep, fit_power_law, n_t_point,
                          reconstruct)
from .numerics import solve_batched
from .observables import Observable
from .spectral import (ExtMapSpec, determinant_pipeline, galerkin_pipeline,
                       gradient_pairing_check, renorm_pairing_check)
from .torus import MapSpec, wrap

SCHEMA_VERSION = 1
ARTIFACT_VERSION = 1

EXPERIMENTS = ("identities", "spectrum", "growth", "coboundary",
               "sweep-alpha")

_PARAM_DEFAULTS = {
    "identities": {
        "samples": 8, "t_max": 20.0, "pair_depth": 4, "transfer_steps": 2,
        "tol": 1e-6, "pairing_tol": 1e-4,
    },
    "spectrum": {
        "n_traces": 10, "k_small": 16, "m_small": 16, "k_big": 24,
        "m_big": 24, "n_eigs": 10,
    },
    "growth": {
        "t_min": 10.0, "t_max": 1e4, "n_points": 25, "tol": 1e-9,
    },
    "coboundary": {
        "horizon": 1e3, "grid": 32, "diag_grid": 16,
        "t_list": [1e2, 1e3, 1e4], "divisor_k": 100,
    },
    "sweep-alpha": {
        "alpha_start": 0.0, "alpha_stop": 0.1, "alpha_step": 0.01,
        "n_traces": 8, "jump_factor": 10.0,
    },
}

_LIST_PARAMS = {"t_list"}
_INT_PARAMS = {"samples", "pair_depth", "transfer_steps", "n_traces",
               "k_small", "m_small", "k_big", "m_big", "n_eigs", "n_points",
               "grid", "diag_grid", "divisor_k"}


def _parse_params(experiment, raw):
    defaults = dict(_PARAM_DEFAULTS[experiment])
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigInvalid("params must be an object")
    for key, val in raw.items():
        if key not in defaults:
            raise ConfigInvalid(
                f"unknown parameter {key!r} for experiment {experiment!r}")
        if key in _LIST_PARAMS:
            if (not isinstance(val, list) or not val
                    or not all(isinstance(v, (int, float)) for v in val)):
                raise ConfigInvalid(f"parameter {key!r} must be a "
                                    "nonempty list of numbers")
            if any(v <= 0 for v in val):
                raise ConfigInvalid(f"parameter {key!r} must be positive")
            defaults[key] = [float(v) for v in val]
            continue
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigInvalid(f"parameter {key!r} must be a number")
        if key in _INT_PARAMS:
            if int(val) != val:
                raise ConfigInvalid(f"parameter {key!r} must be an integer")
            val = int(val)
        if key.startswith("alpha"):
            if val < 0:
                raise ConfigInvalid(f"parameter {key!r} must be >= 0")
        elif val <= 0:
            raise ConfigInvalid(f"parameter {key!r} must be positive")
        defaults[key] = val
    return defaults


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; raw holds the canonical dict."""

    experiment: str
    map_spec: MapSpec
    field: VectorFieldSpec
    observables: tuple
    params: dict
    seed: int
    raw: dict

    @classmethod
    def from_json(cls, source):
        if isinstance(source, (str, bytes)):
            try:
                raw = json.loads(source)
            except json.JSONDecodeError as exc:
                raise ConfigInvalid(f"config is not valid JSON: {exc}")
        else:
            raw = source
        if not isinstance(raw, dict):
            raise ConfigInvalid("config must be a JSON object")
        version = raw.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigInvalid(
                f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
        experiment = raw.get("experiment")
        if experiment not in EXPERIMENTS:
            raise ConfigInvalid(
                f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
        if "map" not in raw or not isinstance(raw["map"], dict):
            raise ConfigInvalid("config requires a 'map' object")
        map_raw = dict(raw["map"])
        if "linear" in map_raw and "A" not in map_raw:
            map_raw["A"] = map_raw.pop("linear")
        try:
            map_spec = MapSpec.from_json(map_raw)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigInvalid(f"invalid map: {exc}")
        field_raw = raw.get("field", {})
        if not isinstance(field_raw, dict):
            raise ConfigInvalid("field must be an object")
        try:
            field = VectorFieldSpec.from_json({"map": map_raw, **field_raw})
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigInvalid(f"invalid field: {exc}")
        obs_raw = raw.get("observables", [])
        if not isinstance(obs_raw, list):
            raise ConfigInvalid("observables must be a list")
        try:
            observables = tuple(Observable.from_json(o) for o in obs_raw)
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise ConfigInvalid(f"invalid observable: {exc}")
        if experiment in ("identities", "growth", "coboundary") \
                and not observables:
            raise ConfigInvalid(
                f"experiment {experiment!r} requires at least one observable")
        params = _parse_params(experiment, raw.get("params"))
        seed = raw.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigInvalid("seed must be a nonnegative integer")
        canonical = {
            "schema_version": SCHEMA_VERSION,
            "experiment": experiment,
            "map": json.loads(map_spec.to_json()),
            "field": json.loads(field.to_json()),
            "observables": [json.loads(o.to_json()) for o in observables],
            "params": params,
            "seed": seed,
        }
        return cls(experiment, map_spec, field, observables, params, seed,
                   canonical)

    @property
    def config_hash(self):
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def load_config(path):
    with open(path) as fh:
        return ExperimentConfig.from_json(fh.read())


# -- artifact plumbing --------------------------------------------------------

class ArtifactWriter:
    """Writes stamped JSON/CSV files and a final checksum manifest."""

    def __init__(self, out_dir, config):
        self.out_dir = out_dir
        self.config = config
        self.hashes = {}
        os.makedirs(out_dir, exist_ok=True)

    def _store(self, name, data):
        path = os.path.join(self.out_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(data)
        self.hashes[name] = hashlib.sha256(data.encode()).hexdigest()

    def write_json(self, name, payload):
        body = {"artifact_version": ARTIFACT_VERSION,
                "config_hash": self.config.config_hash}
        body.update(payload)
        self._store(name, json.dumps(body, sort_keys=True, indent=1) + "\n")

    def write_csv(self, name, header, rows):
        lines = [f"# config_hash={self.config.config_hash} "
                 f"artifact_version={ARTIFACT_VERSION}", ",".join(header)]
        for row in rows:
            cells = []
            for cell in row:
                if isinstance(cell, str):
                    cells.append(cell)
                elif isinstance(cell, (int, np.integer)):
                    cells.append(str(int(cell)))
                else:
                    cells.append(format(float(cell), ".16e"))
            lines.append(",".join(cells))
        self._store(name, "\n".join(lines) + "\n")

    def write_csv_text(self, name, text):
        stamped = (f"# config_hash={self.config.config_hash} "
                   f"artifact_version={ARTIFACT_VERSION}\n" + text)
        self._store(name, stamped)

    def finalize(self, summary):
        manifest = {
            "artifact_version": ARTIFACT_VERSION,
            "config_hash": self.config.config_hash,
            "experiment": self.config.experiment,
            "config": self.config.raw,
            "files": dict(sorted(self.hashes.items())),
            "summary": summary,
        }
        path = os.path.join(self.out_dir, "MANIFEST.json")
        with open(path, "w") as fh:
            fh.write(json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def _thread_map(fn, items, threads):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- identity battery ---------------------------------------------------------

def flow_and_time_change(vf, p, t, n, tol=1e-11):
    """Endpoint of the flow and the n-step reparametrized time, jointly."""
    xy = np.asarray(torus.as_xy(p), dtype=float).reshape(2)

    def rhs(_, y):
        pos = y[:2]
        out = np.empty(3)
        out[:2] = eval_V(vf, pos)
        out[2] = nu_product(vf, wrap(pos[None, :]), n)[0]
        return out

    sol = solve_batched(rhs, np.concatenate([xy, [0.0]]), float(t),
                        rtol=tol, atol=tol, t_eval=[float(t)])
    state = sol.y[:, -1]
    return wrap(state[:2]), float(state[2])


def commute_check(vf, rng, samples, t_max, tol=1e-11):
    """Map-then-flow against flow-then-map; worst torus distance."""
    worst = 0.0
    for _ in range(samples):
        x = rng.random(2)
        t = 1.0 + (t_max - 1.0) * rng.random()
        n = n_t_point(vf, x, t)
        end, tau = flow_and_time_change(vf, x, t, n, tol=tol)
        left = torus.apply_map(vf.base, end, n)
        right = flow(vf, torus.apply_map(vf.base, x, n), tau, tol=tol)
        worst = max(worst, float(torus.torus_distance(left, right)))
    return worst


def cocycle_law_check(vf, rng, pair_depth, t_max=2.0, tol=1e-12):
    """Composition laws of the time change and its matrix cocycle.

    Times are compared in the source parametrization; each matrix factor
    is queried at its own renormalized coordinate.  Matrix residuals are
    entrywise relative to max(1, largest entry among the three factors).
    """
    worst_tau = 0.0
    worst_theta = 0.0
    t_grid = np.linspace(0.1, t_max, 5)
    pairs = [(n, m) for n in range(1, pair_depth) for m in
             range(1, pair_depth) if n + m <= pair_depth]
    for n, m in pairs:
        x = rng.random(2)
        cd_n = cocycle(vf, x, n, t_max=2.0 * t_max, tol=tol)
        cd_nm = cocycle(vf, x, n + m, t_max=2.0 * t_max, tol=tol)
        y = torus.apply_map(vf.base, x, n)
        cd_m = cocycle(vf, y, m, t_max=2.0 * t_max, tol=tol)
        s_n = cd_n.tau(t_grid)
        s_nm = cd_m.tau(s_n)
        worst_tau = max(worst_tau, float(np.max(np.abs(
            s_nm - cd_nm.tau(t_grid)))))
        for t, sn, snm in zip(t_grid, s_n, s_nm):
            th_m, th_n = cd_m.theta(snm), cd_n.theta(sn)
            th_nm = cd_nm.theta(float(cd_nm.tau(t)))
            scale = max(1.0, float(np.max(np.abs([th_m, th_n, th_nm]))))
            worst_theta = max(worst_theta, float(np.max(np.abs(
                th_m @ th_n - th_nm))) / scale)
    return worst_tau, worst_theta


def field_transport_check(vf, rng, samples, t_max, tol=1e-9):
    """The flow derivative carries the field onto itself along orbits."""
    worst = 0.0
    for _ in range(samples):
        x = rng.random(2)
        t = t_max * rng.random()
        end, J = flow_with_jacobian(vf, x, t, tol=tol)
        res = J @ eval_V(vf, x) - eval_V(vf, end)
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


def basic_step_check(vf, g, rng, samples, n_steps, t_max=6.0, tol=1e-10):
    """Ergodic integral against its n-fold transfer reformulation."""
    worst = 0.0
    for _ in range(samples):
        x = rng.random(2)
        t = 1.0 + (t_max - 1.0) * rng.random()
        base = ergodic_integral(vf, x, t, g, tol=tol)
        for n in range(1, n_steps + 1):
            _, tau = flow_and_time_change(vf, x, t, n, tol=max(tol, 1e-12))
            pushed = ergodic_integral(
                vf, torus.apply_map(vf.base, x, n), tau,
                transfer_observable(vf, g, n), tol=tol)
            worst = max(worst, abs(pushed - base))
    return worst


def decomposition_check(vf, g, rng, samples, t_max, tol=1e-9):
    """Window decomposition reassembles the integral; depth stays bounded."""
    worst = 0.0
    depth_ok = True
    for _ in range(samples):
        x = rng.random(2)
        t = 2.0 + (t_max - 2.0) * rng.random()
        dec = decompose(vf, x, t, tol=tol)
        total = reconstruct(dec, vf, g, tol=tol)
        base = ergodic_integral(vf, x, t, g, tol=tol)
        worst = max(worst, abs(total - base))
        depth_ok = depth_ok and max(dec.k_minus, dec.k_plus) <= dec.n_t
    return worst, depth_ok


def _run_identities(cfg, writer, threads):
    vf = cfg.field
    g = cfg.observables[0]
    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    espec = ExtMapSpec.build(cfg.map_spec)
    checks = []

    def add(name, residual, tol):
        checks.append({"name": name, "residual": float(residual),
                       "tol": float(tol),
                       "passed": bool(residual <= tol)})

    add("flow-map-commutation",
        commute_check(vf, rng, p["samples"], p["t_max"]), p["tol"])
    tau_res, theta_res = cocycle_law_check(vf, rng, p["pair_depth"])
    add("time-change-cocycle", tau_res, p["tol"])
    add("matrix-cocycle", theta_res, p["tol"])
    add("field-transport",
        field_transport_check(vf, rng, p["samples"], min(p["t_max"], 20.0)),
        1e-7)
    add("transfer-step",
        basic_step_check(vf, g, rng, max(2, p["samples"] // 2),
                         p["transfer_steps"]), p["tol"])
    dec_res, depth_ok = decomposition_check(
        vf, g, rng, max(2, p["samples"] // 2), min(p["t_max"], 40.0))
    add("decomposition-reconstruction", dec_res, p["tol"])
    checks.append({"name": "decomposition-depth", "residual": 0.0,
                   "tol": 0.0, "passed": bool(depth_ok)})
    for n in range(1, p["transfer_steps"] + 1):
        _, _, rel = renorm_pairing_check(espec, vf, g, rng.random(2), n)
        add(f"window-pairing-{n}", rel, p["pairing_tol"])
    v = rng.standard_normal(2)
    v /= np.linalg.norm(v)
    _, _, rel = gradient_pairing_check(espec, vf, g, rng.random(2),
                                       1.0 + rng.random(), v, 1)
    add("gradient-pairing", rel, p["pairing_tol"])

    passed = all(c["passed"] for c in checks)
    writer.write_json("identities.json", {
        "alpha": cfg.map_spec.alpha, "checks": checks, "passed": passed})
    writer.write_csv("identities.csv",
                     ["name", "residual", "tol", "passed"],
                     [(c["name"], c["residual"], c["tol"], int(c["passed"]))
                      for c in checks])
    summary = {"passed": passed,
               "max_residual": max(c["residual"] for c in checks)}
    return (0 if passed else 1), summary


def _run_spectrum(cfg, writer, threads):
    p = cfg.params
    espec = ExtMapSpec.build(cfg.map_spec)
    vf = cfg.field

    det = determinant_pipeline(espec, n_max=p["n_traces"])
    gal = galerkin_pipeline(espec, vf,
                            small=(p["k_small"], p["m_small"]),
                            big=(p["k_big"], p["m_big"]), k=p["n_eigs"])
    agree = []
    for rho, err in zip(det.resonances, det.errors):
        j = int(np.argmin(np.abs(gal.resonances - rho)))
        agree.append({
            "determinant": abs(rho), "galerkin": abs(gal.resonances[j]),
            "rel_diff": abs(gal.resonances[j] - rho) / abs(rho)})
    payload = {
        "alpha": cfg.map_spec.alpha,
        "determinant": json.loads(det.to_json()),
        "galerkin": json.loads(gal.to_json()),
        "agreement": agree,
    }
    if cfg.map_spec.alpha == 0.0:
        from .spectral import analytic_linear_spectrum
        exact = analytic_linear_spectrum(cfg.map_spec, k_max=4)
        payload["oracle"] = {
            "values": [float(v) for v in exact[:3]],
            "determinant_err": [
                float(abs(abs(r) - v)) for r, v in
                zip(det.resonances[:3], exact[:3])],
            "galerkin_err": [
                float(abs(abs(r) - v)) for r, v in
                zip(gal.resonances[:3], exact[:3])],
        }
    writer.write_json("spectrum.json", payload)
    writer.write_csv("traces.csv", ["n", "trace"],
                     list(zip(det.traces.ns, det.traces.values)))
    writer.write_csv("resonances.csv",
                     ["method", "re", "im", "alpha_exponent", "err"],
                     [("determinant", r.real, r.imag, a, e) for r, a, e in
                      zip(det.resonances, det.alphas, det.errors)] +
                     [("galerkin", r.real, r.imag, a, e) for r, a, e in
                      zip(gal.resonances, gal.alphas, gal.errors)])
    summary = {"leading_modulus": float(abs(det.resonances[0])),
               "n_determinant": len(det.resonances),
               "n_galerkin": len(gal.resonances)}
    return 0, summary


def _run_growth(cfg, writer, threads):
    p = cfg.params
    vf = cfg.field
    rng = np.random.default_rng(cfg.seed)
    start = rng.random(2)
    ts = np.geomspace(p["t_min"], p["t_max"], p["n_points"])

    def one(item):
        idx, g = item
        vals = ergodic_integral_sweep(vf, start, ts, g, tol=p["tol"])
        return idx, np.abs(np.asarray(vals))

    results = _thread_map(one, list(enumerate(cfg.observables)), threads)
    entries = []
    for idx, absH in results:
        name = f"growth_{idx}.csv"
        writer.write_csv(name, ["t", "abs_integral"], list(zip(ts, absH)))
        slope = float(fit_power_law(ts, np.maximum(absH, 1e-300))[0])
        envelope = np.maximum.accumulate(np.maximum(absH, 1e-300))
        slope_env = float(fit_power_law(ts, envelope)[0])
        entries.append({
            "observable": json.loads(cfg.observables[idx].to_json()),
            "mean": float(np.real(cfg.observables[idx].mean)),
            "file": name,
            "fitted_slope": slope,
            "envelope_slope": slope_env,
        })
    writer.write_json("growth.json", {
        "alpha": cfg.map_spec.alpha, "start": list(start),
        "t_range": [float(ts[0]), float(ts[-1])], "observables": entries})
    summary = {"slopes": [e["fitted_slope"] for e in entries]}
    return 0, summary


def _run_coboundary(cfg, writer, threads):
    p = cfg.params
    vf = cfg.field
    g = cfg.observables[0]
    est = coboundary_estimate(vf, g, p["horizon"], grid=p["grid"])
    writer.write_csv_text("hbar_grid.csv", est.to_csv())
    diag = lipschitz_diagnostic(vf, g, p["t_list"], grid=p["diag_grid"])
    payload = {
        "alpha": cfg.map_spec.alpha,
        "horizon": est.horizon,
        "level": est.level,
        "affine_coeffs": est.affine_coeffs,
        "affine_residual": est.affine_residual,
        "diagnostic": diag,
    }
    const = constant_speed_field(vf)
    if const is not None:
        omega = float(const[1] / const[0])
        prof = small_divisor_profile(omega, p["divisor_k"])
        payload["small_divisors"] = {
            "omega": omega,
            "min_product": prof.min_product,
            "argmin_k": list(prof.argmin_k),
            "min_product_inf": prof.min_product_inf,
            "argmin_k_inf": list(prof.argmin_k_inf),
        }
        if abs(g.mean) < 1e-12:
            sol = fourier_solve(g, const)
            writer.write_csv_text("solver_reference.csv", _solution_csv(
                sol, p["grid"]))
    writer.write_json("coboundary.json", payload)
    summary = {"affine_residual": est.affine_residual,
               "bounded": diag["bounded"]}
    return 0, summary


def _solution_csv(sol, grid):
    u = np.arange(grid) / grid
    g1, g2 = np.meshgrid(u, u, indexing="ij")
    pts = np.stack([g1, g2], axis=-1)
    vals = np.real(sol(pts))
    lines = ["x1,x2,value"]
    for (x1, x2), v in zip(pts.reshape(-1, 2), vals.ravel()):
        lines.append(f"{x1:.16e},{x2:.16e},{v:.16e}")
    return "\n".join(lines) + "\n"


def _run_sweep(cfg, writer, threads):
    p = cfg.params
    n_steps = int(round((p["alpha_stop"] - p["alpha_start"])
                        / p["alpha_step"]))
    alphas = [round(p["alpha_start"] + i * p["alpha_step"], 12)
              for i in range(n_steps + 1)]

    def one(alpha):
        spec = MapSpec(cfg.map_spec.linear, alpha, cfg.map_spec.variant)
        return determinant_pipeline(ExtMapSpec.build(spec),
                                    n_max=p["n_traces"])

    results = _thread_map(one, alphas, threads)
    steps = []
    rows = []
    for alpha, res in zip(alphas, results):
        items = []
        for rho, err, expo in zip(res.resonances, res.errors, res.alphas):
            items.append({"re": float(rho.real), "im": float(rho.imag),
                          "err": float(err), "alpha_exponent": float(expo)})
            rows.append((alpha, abs(rho), rho.real, rho.imag, err))
        steps.append({"alpha": alpha, "resonances": items})

    jumps = []
    continuous = True
    for (a0, res0), (a1, res1) in zip(zip(alphas, results),
                                      zip(alphas[1:], results[1:])):
        r0, e0 = res0.resonances, res0.errors
        r1, e1 = res1.resonances, res1.errors
        if not len(r0) or not len(r1):
            continue
        for i, rho in enumerate(r0):
            j = int(np.argmin(np.abs(r1 - rho)))
            if int(np.argmin(np.abs(r0 - r1[j]))) != i:
                continue        # track is not retained at the next step
            jump = float(abs(r1[j] - rho))
            thr = p["jump_factor"] * max(e0[i] * abs(rho),
                                         e1[j] * abs(r1[j]))
            ok = jump <= thr
            continuous = continuous and ok
            jumps.append({"alpha_from": a0, "alpha_to": a1,
                          "modulus": float(abs(rho)), "jump": jump,
                          "threshold": float(thr), "within": bool(ok)})
    writer.write_json("sweep.json", {
        "alphas": alphas, "steps": steps, "tracked_jumps": jumps,
        "continuous": continuous})
    writer.write_csv("sweep.csv", ["alpha", "modulus", "re", "im", "err"],
                     rows)
    summary = {"continuous": continuous, "n_alphas": len(alphas)}
    return 0, summary


_RUNNERS = {
    "identities": _run_identities,
    "spectrum": _run_spectrum,
    "growth": _run_growth,
    "coboundary": _run_coboundary,
    "sweep-alpha": _run_sweep,
}


def resolve_threads(threads=None):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("RENORM_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigInvalid(
                f"RENORM_LAB_THREADS must be an integer, got {env!r}")
    return 1


def run(config, out_dir, threads=None):
    """Execute the configured experiment; returns the process exit code."""
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_json(config)
    threads = resolve_threads(threads)
    writer = ArtifactWriter(out_dir, config)
    code, summary = _RUNNERS[config.experiment](config, writer, threads)
    writer.finalize(summary)
    return code
