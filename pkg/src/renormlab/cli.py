"""Command-line entry point: run experiment configs, summarise artifacts.

The report command only reads what run wrote; checksums from the
manifest guard against missing or edited files.
"""

import argparse
import hashlib
import json
import os
import sys

from .errors import ConfigInvalid, MissingArtifacts
from .experiments import load_config, run


def _load_manifest(art_dir):
    path = os.path.join(art_dir, "MANIFEST.json")
    if not os.path.isfile(path):
        raise MissingArtifacts(f"no manifest at {path}")
    with open(path) as fh:
        manifest = json.load(fh)
    for name, digest in manifest.get("files", {}).items():
        fpath = os.path.join(art_dir, name)
        if not os.path.isfile(fpath):
            raise MissingArtifacts(f"artifact {name} is missing")
        with open(fpath, "rb") as fh:
            actual = hashlib.sha256(fh.read()).hexdigest()
        if actual != digest:
            raise MissingArtifacts(
                f"artifact {name} does not match its recorded checksum")
    return manifest


def _read_json(art_dir, name):
    with open(os.path.join(art_dir, name)) as fh:
        return json.load(fh)


def _fmt(x, width=12):
    if isinstance(x, float):
        return f"{x:<{width}.6g}"
    return f"{str(x):<{width}}"


def _report_identities(art_dir, out):
    data = _read_json(art_dir, "identities.json")
    out.append(f"identity battery at alpha={data['alpha']}")
    out.append(f"{'check':<32}{'residual':<14}{'tol':<12}status")
    for c in data["checks"]:
        status = "pass" if c["passed"] else "FAIL"
        out.append(f"{c['name']:<32}{c['residual']:<14.3e}"
                   f"{c['tol']:<12.1e}{status}")
    out.append(f"overall: {'pass' if data['passed'] else 'FAIL'}")


def _report_spectrum(art_dir, out):
    data = _read_json(art_dir, "spectrum.json")
    out.append(f"spectrum at alpha={data['alpha']}")
    for method in ("determinant", "galerkin"):
        block = data[method]
        out.append(f"  {method}:")
        out.append(f"  {'modulus':<14}{'re':<14}{'im':<14}"
                   f"{'exponent':<12}{'err':<10}")
        for item in block["resonances"]:
            rho = complex(item["re"], item["im"])
            out.append(f"  {abs(rho):<14.8g}{item['re']:<14.8g}"
                       f"{item['im']:<14.3g}{item['alpha']:<12.6g}"
                       f"{item['err']:<10.2e}")
    if "oracle" in data:
        out.append("  exact-case errors (determinant): " + ", ".join(
            f"{e:.2e}" for e in data["oracle"]["determinant_err"]))
        out.append("  exact-case errors (galerkin):    " + ", ".join(
            f"{e:.2e}" for e in data["oracle"]["galerkin_err"]))


def _report_growth(art_dir, out):
    data = _read_json(art_dir, "growth.json")
    out.append(f"growth exponents at alpha={data['alpha']}, "
               f"t in [{data['t_range'][0]:g}, {data['t_range'][1]:g}]")
    out.append(f"{'observable mean':<18}{'slope':<12}"
               f"{'envelope slope':<16}file")
    for e in data["observables"]:
        out.append(f"{e['mean']:<18.6g}{e['fitted_slope']:<12.4f}"
                   f"{e['envelope_slope']:<16.4f}{e['file']}")


def _report_coboundary(art_dir, out):
    data = _read_json(art_dir, "coboundary.json")
    out.append(f"coboundary estimate at alpha={data['alpha']}, "
               f"horizon={data['horizon']:g} (level {data['level']})")
    if data.get("affine_residual") is not None:
        a, b = data["affine_coeffs"]
        out.append(f"  affine fit vs exact solver: intercept={a:.3e} "
                   f"slope={b:.9g} residual={data['affine_residual']:.3e}")
    diag = data["diagnostic"]
    out.append(f"  gradient sup per horizon: " + ", ".join(
        f"{v:.6g}" for v in diag["sup_values"]))
    out.append(f"  fitted trend slope {diag['fitted_slope']:.4f} -> "
               f"{'bounded' if diag['bounded'] else 'growing'}")
    if "small_divisors" in data:
        sd = data["small_divisors"]
        out.append(f"  small divisors: min product {sd['min_product']:.6f} "
                   f"at k={tuple(sd['argmin_k'])} (sup-norm "
                   f"{sd['min_product_inf']:.6f} at "
                   f"k={tuple(sd['argmin_k_inf'])})")


def _report_sweep(art_dir, out):
    data = _read_json(art_dir, "sweep.json")
    out.append(f"resonance sweep over alpha={data['alphas'][0]:g}"
               f"..{data['alphas'][-1]:g} ({len(data['alphas'])} steps)")
    out.append(f"{'alpha':<8}{'retained moduli':<50}")
    for step in data["steps"]:
        mods = ", ".join(
            f"{abs(complex(i['re'], i['im'])):.7f}"
            for i in step["resonances"])
        out.append(f"{step['alpha']:<8g}{mods:<50}")
    verdict = "continuous" if data["continuous"] else "JUMP DETECTED"
    out.append(f"tracked jumps: {len(data['tracked_jumps'])}, {verdict}")


_REPORTERS = {
    "identities": _report_identities,
    "spectrum": _report_spectrum,
    "growth": _report_growth,
    "coboundary": _report_coboundary,
    "sweep-alpha": _report_sweep,
}


def report(art_dir):
    """Text summary of a finished artifact directory; no recomputation."""
    manifest = _load_manifest(art_dir)
    out = [f"experiment: {manifest['experiment']}",
           f"config hash: {manifest['config_hash']}"]
    _REPORTERS[manifest["experiment"]](art_dir, out)
    return "\n".join(out)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="renorm-lab",
        description="reproducible renormalization experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("--config", required=True, help="config JSON path")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: RENORM_LAB_THREADS "
                            "or 1)")
    p_rep = sub.add_parser("report", help="summarise a finished run")
    p_rep.add_argument("dir", help="artifact directory")
    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            return run(load_config(args.config), args.out,
                       threads=args.threads)
        print(report(args.dir))
        return 0
    except (ConfigInvalid, MissingArtifacts) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
