"""Command-line front end: certify, simulate, verify, scan, report.

All experiments are driven by a single JSON config; every random quantity is
derived from the config seed, so a (config, seed) pair reproduces artifacts
byte for byte.  Exit codes: 0 success/PASS, 1 config error, 2 verification
failure or insufficient data, 3 runtime failure (quadrature, regeneration).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from .chain import QuadratureFailure, StateSpace, verify_drift, verify_minorization
from .constants import drift_norm_set
from .bounds import general_markov_curve, geometric_curve
from .estimators import InsufficientData, domination_verdict, empirical_tail
from .examples import (GaussianProposal, GaussianTarget, LaplaceProposal,
                       geometric_example, geometric_pi_expectation,
                       logconcave_example, scan_xstar)
from .splitting import (NoRegeneration, ResidualKernelNegative, derive_rng,
                        extract_ledger, save_ledger, simulate_split,
                        simulate_sums_batch)


class ConfigError(ValueError):
    pass


class MissingInputs(FileNotFoundError):
    pass


# ---------------------------------------------------------------------------
# config handling


def _need(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"missing required field '{where}{key}'")
    return cfg[key]


def load_config(path: str, overrides: argparse.Namespace) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config is not valid JSON (line {exc.lineno}, column {exc.colno}): "
            f"{exc.msg}") from exc
    if overrides.seed is not None:
        cfg["seed"] = overrides.seed
    if overrides.replicas is not None:
        cfg["replicas"] = overrides.replicas
    if overrides.out is not None:
        cfg["out"] = overrides.out
    cfg["threads"] = overrides.threads
    if "seed" not in cfg:
        raise ConfigError("missing required field 'seed' "
                          "(reproducibility requires an explicit seed)")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("'seed' must be a nonnegative integer")
    if cfg.get("replicas", 1) < 1:
        raise ConfigError("'replicas' must be >= 1")
    return cfg


def build_model(cfg: dict):
    """Construct (spec, model, cert, info) from the config's model block."""
    mc = _need(cfg, "model", "")
    name = _need(mc, "name", "model.")
    if name == "geometric":
        rho = float(_need(mc, "rho", "model."))
        drift = mc.get("drift", {})
        a_base = float(drift.get("A", 1.0 + (1.0 / rho - 1.0) / 2.0))
        try:
            spec, model, cert = geometric_example(rho, a_base)
        except ValueError as exc:
            raise ConfigError(f"model.drift: {exc}") from exc
        if "lambda" in drift or "b" in drift or "K" in drift:
            # explicit override of the certificate (tamper-friendly for audits)
            from .chain import DriftCertificate
            try:
                cert = DriftCertificate(
                    V=spec.V, lam=float(drift.get("lambda", cert.lam)),
                    b=float(drift.get("b", cert.b)),
                    K=float(drift.get("K", cert.K)))
            except ValueError as exc:
                raise ConfigError(f"model.drift: {exc}") from exc
        grid = range(0, int(mc.get("grid_max", 200)) + 1)
        sets = [frozenset({0}), frozenset({1}), frozenset({0, 1}),
                frozenset({0, 1, 2})]
        return spec, model, cert, {"grid": list(grid), "sets": sets,
                                   "start": int(mc.get("start", 0))}
    if name == "logconcave":
        x_star = float(_need(mc, "xstar", "model."))
        prop_cfg = mc.get("proposal", {"name": "laplace", "scale": 1.0})
        proposal = build_proposal(prop_cfg)
        target_cfg = mc.get("target", {"name": "gaussian"})
        target = build_target(target_cfg)
        try:
            spec, model, cert = logconcave_example(proposal, x_star, target)
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc
        if "small_set" in mc and "delta" in mc["small_set"]:
            model.small_set.delta = float(mc["small_set"]["delta"])
        n_grid = int(mc.get("grid_points", 401))
        grid = list(np.linspace(-2 * x_star, 2 * x_star, n_grid))
        edges = np.linspace(-x_star, x_star, 9)
        sets = [(float(lo), float(hi)) for lo, hi in zip(edges[:-1], edges[1:])]
        sets.append((-x_star, x_star))
        return spec, model, cert, {"grid": grid, "sets": sets,
                                   "start": float(mc.get("start", 0.0))}
    raise ConfigError(f"model.name must be 'geometric' or 'logconcave', got {name!r}")


def build_proposal(cfg: dict):
    name = cfg.get("name", "laplace")
    scale = float(cfg.get("scale", 1.0))
    if name == "laplace":
        return LaplaceProposal(scale=scale)
    if name == "gaussian":
        return GaussianProposal(scale=scale)
    raise ConfigError(f"model.proposal.name: unknown proposal {name!r}")


def build_target(cfg: dict):
    name = cfg.get("name", "gaussian")
    if name == "gaussian":
        return GaussianTarget(sigma=float(cfg.get("sigma", 1.0)))
    raise ConfigError(f"model.target.name: unknown target {name!r}")


def build_function(cfg: dict, spec, model):
    """The additive functional g, its centering pi(g), and the growth data."""
    fc = cfg.get("function", {"kappa": 1.0, "s": 1.0})
    kappa = float(fc.get("kappa", 1.0))
    s = float(fc.get("s", 1.0))
    if s <= 0.0 or kappa < 0.0:
        raise ConfigError("function: need s > 0 and kappa >= 0")
    if model.state_space is StateSpace.INTEGER_LATTICE:
        def g(x):
            return kappa * np.asarray(x, dtype=float) ** s
        pi_g = geometric_pi_expectation(lambda i: kappa * float(i) ** s, spec.rho)
        kappa_logv = spec.log_v_kappa(kappa, s)
    else:
        def g(x):
            x = np.asarray(x, dtype=float)
            return kappa * np.sign(x) * np.abs(x) ** s
        pi_g = 0.0  # odd g, symmetric target
        kappa_logv = kappa  # log V(x) = 1 + |x| >= (1 + |x|)
    return g, pi_g, kappa, s, kappa_logv


# ---------------------------------------------------------------------------
# artifact writers (deterministic formatting)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_digest(cfg: dict) -> str:
    # output location and worker count do not affect results
    canon = {k: v for k, v in cfg.items() if k not in ("out", "threads")}
    return hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# commands


def cmd_certify(cfg: dict) -> int:
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    spec, model, cert, info = build_model(cfg)
    _, _, kappa, s, kappa_logv = build_function(cfg, spec, model)

    drift_rep = verify_drift(model, cert, info["grid"])
    minor_rep = verify_minorization(model, info["grid"], info["sets"])
    ok = drift_rep.passed and minor_rep.passed
    payload = {}
    if ok:
        # the norm pipeline presumes a valid certificate; skip it on FAIL
        start = info["start"]
        norms = drift_norm_set(cert, model.small_set.delta, kappa_logv, s,
                               float(cert.V(start)), model.pi_c,
                               model.small_set.contains(start))
        payload = norms.to_dict()
    payload.update({
        "drift_check": {"status": drift_rep.status,
                        "max_violation": drift_rep.max_violation,
                        "max_violation_rel": drift_rep.max_violation_rel},
        "minorization_check": {"status": minor_rep.status,
                               "min_slack": minor_rep.min_slack},
        "delta": model.small_set.delta,
        "lambda": cert.lam,
        "b_drift": cert.b,
        "K": cert.K,
        "config_digest": config_digest(cfg),
    })
    write_json(out / "certificate.json", payload)
    print(f"certify: drift {drift_rep.status} "
          f"(max violation {drift_rep.max_violation_rel:.3e} rel. to V), "
          f"minorization {minor_rep.status} "
          f"(min slack {minor_rep.min_slack:.3e})")
    return 0 if ok else 2


def cmd_simulate(cfg: dict) -> int:
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    spec, model, cert, info = build_model(cfg)
    g, pi_g, *_ = build_function(cfg, spec, model)
    n = int(cfg.get("n", 4096))
    replicas = int(cfg.get("replicas", 1))
    seed = cfg["seed"]
    f = lambda x: g(x) - pi_g
    for k in range(replicas):
        rng = derive_rng(seed, 2, k)
        traj = simulate_split(model, n, info["start"], rng)
        ledger = extract_ledger(traj, f, n)
        save_ledger(ledger, out / f"ledger_{k:04d}.csv",
                    out / f"ledger_{k:04d}.json", seed=seed)
    print(f"simulate: wrote {replicas} ledger(s) for n={n} to {out}")
    return 0


def _build_curve(cfg: dict, model, cert, norms, n: int):
    bc = cfg.get("bound", {"name": "theorem_a", "eta": 0.5})
    name = bc.get("name", "theorem_a")
    if name == "theorem_a":
        eta = float(bc.get("eta", 0.5))
        curve = geometric_curve(a=norms.a, b=norms.b, c=norms.c, d=norms.d,
                                sigma2=norms.sigma2_cap, pi_theta=norms.pi_theta,
                                n=n, alpha=norms.alpha, eta=eta,
                                pi_theta_inv=norms.d)
        return curve
    if name == "geometric":
        eta = float(bc.get("eta", 0.5))
        return geometric_curve(a=norms.a, b=norms.b, c=norms.c, d=norms.d,
                               sigma2=norms.sigma2_cap, pi_theta=norms.pi_theta,
                               n=n, alpha=norms.alpha, eta=eta)
    if name == "general_markov":
        m = model.small_set.m
        if n % m:
            raise ConfigError(f"bound.general_markov requires m | n (m={m}, n={n})")
        return general_markov_curve(a=norms.a, b=norms.b, c=norms.c,
                                    sigma2=norms.sigma2_cap,
                                    pi_theta=norms.pi_theta, n=n, m=m,
                                    alpha=norms.alpha)
    raise ConfigError(f"bound.name: unknown bound {name!r}")


def _t_grid(cfg: dict, sums: np.ndarray) -> np.ndarray:
    tg = cfg.get("t_grid", {})
    if isinstance(tg, list):
        grid = np.asarray(tg, dtype=float)
        if np.any(np.diff(grid) <= 0):
            raise ConfigError("t_grid must be strictly increasing")
        return grid
    lo = float(tg.get("lo", 0.0))
    hi = tg.get("hi")
    hi = float(np.max(np.abs(sums)) if hi is None else hi)
    num = int(tg.get("num", 20))
    if hi <= lo:
        raise ConfigError("t_grid: need hi > lo")
    return np.linspace(lo, hi, num)


def cmd_verify(cfg: dict) -> int:
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    spec, model, cert, info = build_model(cfg)
    g, pi_g, kappa, s, kappa_logv = build_function(cfg, spec, model)
    n = int(cfg.get("n", 4096))
    replicas = int(cfg.get("replicas", 1000))
    seed = cfg["seed"]

    drift_rep = verify_drift(model, cert, info["grid"])
    minor_rep = verify_minorization(model, info["grid"], info["sets"])
    if not (drift_rep.passed and minor_rep.passed):
        write_json(out / "certificate.json", {
            "drift_check": {"status": drift_rep.status,
                            "max_violation_rel": drift_rep.max_violation_rel},
            "minorization_check": {"status": minor_rep.status,
                                   "min_slack": minor_rep.min_slack},
            "config_digest": config_digest(cfg),
        })
        print("verify: certificate checks FAILED; not simulating")
        return 2
    start = info["start"]
    norms = drift_norm_set(cert, model.small_set.delta, kappa_logv, s,
                           float(cert.V(start)), model.pi_c,
                           model.small_set.contains(start))
    cert_payload = norms.to_dict()
    cert_payload.update({
        "drift_check": {"status": drift_rep.status,
                        "max_violation": drift_rep.max_violation,
                        "max_violation_rel": drift_rep.max_violation_rel},
        "minorization_check": {"status": minor_rep.status,
                               "min_slack": minor_rep.min_slack},
        "config_digest": config_digest(cfg),
    })
    write_json(out / "certificate.json", cert_payload)

    sums = simulate_sums_batch(model, g, n, replicas, seed, start,
                               center=pi_g, threads=cfg.get("threads", 1))
    abs_sums = np.abs(sums)
    grid = _t_grid(cfg, abs_sums)
    tail = empirical_tail(abs_sums, grid)
    curve = _build_curve(cfg, model, cert, norms, n)
    verdict = domination_verdict(tail, curve)

    write_csv(out / "tails.csv", ["t", "empirical", "stderr"],
              zip(tail.grid, tail.prob, tail.stderr))
    labels = curve.term_labels()
    rows = []
    for t in tail.grid:
        tc = float(t) / curve.deviation_scale
        vals = curve.term_values(tc) if tc >= curve.valid_from else None
        total = curve.bound_at_threshold(float(t))
        rows.append([t, total] + (vals if vals is not None
                                  else [math.nan] * len(labels)))
    write_csv(out / "bounds.csv", ["t", "total"] + labels, rows)
    write_json(out / "bounds_params.json", {
        "name": curve.name,
        "terms": labels,
        "params": {k: v for k, v in curve.params.items()},
        "valid_from": curve.valid_from,
        "deviation_scale": curve.deviation_scale,
    })
    write_json(out / "verdict.json", {
        "status": verdict.status,
        "worst_margin": verdict.worst_margin,
        "worst_t": verdict.worst_t,
        "n_checked": verdict.n_checked,
        "n": n,
        "replicas": replicas,
        "seed": seed,
        "bound": cfg.get("bound", {"name": "theorem_a", "eta": 0.5}),
        "config_digest": config_digest(cfg),
    })
    print(f"verify: domination {verdict.status} "
          f"(worst margin {verdict.worst_margin:.4g} at t={verdict.worst_t:.4g})")
    return 0 if verdict.passed else 2


def cmd_scan(cfg: dict) -> int:
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    mc = _need(cfg, "model", "")
    if mc.get("name") != "logconcave":
        raise ConfigError("scan requires model.name = 'logconcave'")
    sc = _need(cfg, "scan", "")
    grid = [float(x) for x in _need(sc, "grid", "scan.")]
    t_eval = float(_need(sc, "t", "scan."))
    n = int(cfg.get("n", 4096))
    proposal = build_proposal(mc.get("proposal", {"name": "laplace"}))
    target = build_target(mc.get("target", {"name": "gaussian"}))
    fc = cfg.get("function", {"kappa": 1.0, "s": 1.0})
    best, table = scan_xstar(proposal, target, grid,
                             kappa=float(fc.get("kappa", 1.0)),
                             s=float(fc.get("s", 1.0)), n=n, t=t_eval,
                             eta=float(cfg.get("bound", {}).get("eta", 0.5)))
    write_csv(out / "scan.csv", ["x_star", "lambda", "b", "delta", "bound"],
              [[r["x_star"], r["lam"], r["b"], r["delta"],
                math.nan if r["bound"] is None else r["bound"]] for r in table])
    write_json(out / "scan.json", {"best_x_star": best, "n": n, "t": t_eval,
                                   "config_digest": config_digest(cfg)})
    print(f"scan: best x* = {best:g} (table in {out / 'scan.csv'})")
    return 0


def cmd_report(cfg: dict) -> int:
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    inputs = cfg.get("report", {}).get("inputs")
    if inputs is None:
        inputs = [str(out)]
    rows = []
    for src in inputs:
        src_path = Path(src)
        tails = src_path / "tails.csv"
        bounds = src_path / "bounds.csv"
        verdict = src_path / "verdict.json"
        if not (tails.exists() and bounds.exists() and verdict.exists()):
            raise MissingInputs(f"no verify outputs under {src_path}")
        meta = json.loads(verdict.read_text())
        with open(tails, newline="") as fh:
            tail_rows = list(csv.DictReader(fh))
        with open(bounds, newline="") as fh:
            bound_rows = list(csv.DictReader(fh))
        for tr, br in zip(tail_rows, bound_rows):
            rows.append([meta["n"], src_path.name, float(tr["t"]),
                         float(tr["empirical"]), float(tr["stderr"]),
                         float(br["total"])])
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    write_csv(out / "report.csv",
              ["n", "source", "t", "empirical", "stderr", "bound_total"], rows)
    _render_figure(rows, out / "report.png")
    print(f"report: merged {len(rows)} rows from {len(inputs)} run(s) "
          f"into {out / 'report.csv'}")
    return 0


def _render_figure(rows, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    by_n = {}
    for n, _, t, emp, se, bound in rows:
        by_n.setdefault(n, []).append((t, emp, se, bound))
    floor = 1e-6
    for n, pts in sorted(by_n.items()):
        pts.sort()
        ts = np.array([p[0] for p in pts])
        emp = np.maximum(np.array([p[1] for p in pts]), floor)
        se = np.array([p[2] for p in pts])
        bound = np.maximum(np.array([p[3] for p in pts]), floor)
        line, = ax.plot(ts, emp, marker="o", ms=3, lw=1.0,
                        label=f"empirical, n={n}")
        ax.fill_between(ts, np.maximum(emp - 3 * se, floor), emp + 3 * se,
                        alpha=0.2, color=line.get_color())
        ax.plot(ts, bound, ls="--", lw=1.2, color=line.get_color(),
                label=f"bound, n={n}")
    ax.set_yscale("log")
    ax.set_xlabel("deviation t")
    ax.set_ylabel("tail probability")
    ax.legend(fontsize=8)
    ax.set_title("empirical tail vs. explicit bound")
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)


# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regenbound",
        description="Concentration bounds for Markov chains from drift data, "
                    "verified by regeneration simulation.")
    parser.add_argument("command",
                        choices=["certify", "simulate", "verify", "scan", "report"])
    parser.add_argument("--config", required=True, help="path to a JSON config")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--replicas", type=int, default=None,
                        help="override the config replica count")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for replica chunks")
    return parser


COMMANDS = {
    "certify": cmd_certify,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "scan": cmd_scan,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (InsufficientData,) as exc:
        print(f"verification error: {exc}", file=sys.stderr)
        return 2
    except (QuadratureFailure, NoRegeneration, ResidualKernelNegative,
            MissingInputs) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
