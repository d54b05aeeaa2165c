"""Command-line entry point: ``readoutem <subcommand> ...``.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
Every command writes a results document whose manifest records the
configuration, seeds and SHA-256 digests of the input files.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .core import ReadoutError, ValidationError, empirical_distribution, global_correlation
from .formats import (
    RunManifest,
    check_shots_match,
    distribution_to_doc,
    file_digest,
    mixture_to_doc,
    read_calibration,
    read_distribution,
    read_shots,
    write_calibration,
    write_results,
    write_shots,
)
from .ibu import IbuConfig, mitigate_full_ibu
from .local import (
    BootstrapConfig,
    LocalProtocolConfig,
    bootstrap_statistic,
    local_cl,
    method_table,
    run_local_protocol,
    structural_cn,
)
from .lsq import mitigate_full_lsq
from .noise_model import sample_noisy_shots
from .structural import EmConfig, fit_mixture, model_correlation, sweep_k
from .synth_oracle import brute_force_lre, brute_force_mixture, make_device_profile, make_ghz_truth

log = logging.getLogger("readoutem")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _rates(text: str) -> tuple[float, float]:
    try:
        low, high = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LOW,HIGH, got {text!r}")
    return low, high


def _methods(text: str) -> tuple[str, ...]:
    return tuple(m.strip() for m in text.split(",") if m.strip())


def _inputs(parser, calibration=True):
    parser.add_argument("--shots", required=True, help="shot file (.txt lines or .json counts)")
    if calibration:
        parser.add_argument("--calibration", required=True, help="calibration JSON")


def _ibu_opts(parser):
    parser.add_argument("--max-iter", type=int, default=1000, help="IBU iteration budget")
    parser.add_argument("--tol", type=float, default=1e-10, help="IBU L1 stopping tolerance")


def _em_opts(parser):
    parser.add_argument("--k", type=int, default=2, help="mixture components")
    parser.add_argument("--restarts", type=int, default=10)
    parser.add_argument("--em-max-iter", type=int, default=500)
    parser.add_argument("--em-tol", type=float, default=1e-10)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="readoutem", description="Readout error mitigation.", formatter_class=fmt)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="synthesize shots and a calibration file", formatter_class=fmt)
    p.add_argument("--n", type=int, required=True, help="qubits")
    p.add_argument("--truth", default="ghz", help="'ghz' or a distribution JSON file")
    p.add_argument("--weight-zero", type=float, default=0.5, help="GHZ weight of the all-zeros string")
    p.add_argument("--rates", type=_rates, default=(0.01, 0.08), help="LOW,HIGH per-qubit rate range")
    p.add_argument("--shots", type=int, default=2000, help="number of shots")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("txt", "json"), default="txt", help="shot file format")
    p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("mitigate-full", help="mitigate the full distribution", formatter_class=fmt)
    _inputs(p)
    p.add_argument("--method", choices=("lsq", "ibu"), default="ibu")
    _ibu_opts(p)
    p.add_argument("--init", choices=("uniform", "empirical"), default="uniform")
    p.add_argument("--project", action="store_true", help="clip-and-renormalize the LSQ result")
    p.add_argument("--out", default="mitigate-full.json")

    p = sub.add_parser("mitigate-local", help="subgroup correlations C_l", formatter_class=fmt)
    _inputs(p)
    p.add_argument("--l", type=int, required=True, help="subgroup size")
    p.add_argument("--groups", type=int, default=300)
    p.add_argument("--methods", type=_methods, default=("raw", "lsq", "ibu"), help="comma list of raw,lsq,ibu")
    p.add_argument("--dedup", action="store_true", help="draw distinct subgroups")
    p.add_argument("--seed", type=int, default=0)
    _ibu_opts(p)
    p.add_argument("--out", default="mitigate-local.json")

    p = sub.add_parser("mitigate-structural", help="fit a K-component bitstring mixture", formatter_class=fmt)
    _inputs(p)
    _em_opts(p)
    p.add_argument("--k-max", type=int, default=None, help="sweep K = 1..K_MAX instead of a single fit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="mitigate-structural.json")

    p = sub.add_parser("bootstrap", help="bootstrap a correlation statistic", formatter_class=fmt)
    _inputs(p)
    p.add_argument("--statistic", choices=("structural-cn", "local-cl"), default="structural-cn")
    p.add_argument("--resamples", type=int, default=190)
    p.add_argument("--size", type=int, default=2000, help="shots per resample")
    p.add_argument("--seed", type=int, default=0)
    _em_opts(p)
    p.add_argument("--l", type=int, default=2, help="subgroup size for local-cl")
    p.add_argument("--groups", type=int, default=300, help="subgroups for local-cl")
    p.add_argument("--method", choices=("raw", "lsq", "ibu"), default="lsq", help="method for local-cl")
    p.add_argument("--out", default="bootstrap.json")

    p = sub.add_parser("oracle", help="brute-force reference solutions", formatter_class=fmt)
    p.add_argument("--mode", choices=("lre-grid", "mixture-enum"), required=True)
    _inputs(p)
    p.add_argument("--grid-step", type=float, default=1e-2)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--out", default="oracle.json")
    return parser


def _load(args):
    record = read_shots(args.shots)
    ch = read_calibration(args.calibration)
    check_shots_match(record, ch)
    digests = {"shots": file_digest(args.shots), "calibration": file_digest(args.calibration)}
    return record, ch, digests


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("command", "verbose")}
    return {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()}


def _finish(args, t0, payload, digests, warnings=(), table=None, seeds=None, out=None):
    seeds = seeds if seeds is not None else ({"seed": args.seed} if hasattr(args, "seed") else {})
    manifest = RunManifest(
        command=args.command,
        config=_config(args),
        seeds=seeds,
        input_digests=digests,
        artifact_version=__version__,
        duration_s=round(time.perf_counter() - t0, 6),
        warnings=list(warnings),
    )
    out = out or args.out
    write_results(out, payload, manifest, table)
    log.info("wrote %s", out)


def cmd_simulate(args, t0):
    low, high = args.rates
    ch = make_device_profile(args.n, low, high, args.seed)
    if args.truth == "ghz":
        truth = make_ghz_truth(args.n, args.weight_zero)
        digests = {}
    else:
        truth = read_distribution(args.truth)
        digests = {"truth": file_digest(args.truth)}
        if truth.n != args.n:
            raise ValidationError(f"truth distribution has n={truth.n}, expected {args.n}")
    record = sample_noisy_shots(ch, truth, args.shots, args.seed + 1)
    out = Path(args.out)
    shots_path = out / f"shots.{args.format}"
    cal_path = out / "calibration.json"
    write_shots(shots_path, record)
    write_calibration(cal_path, ch)
    payload = {
        "shots_file": str(shots_path),
        "calibration_file": str(cal_path),
        "n": args.n,
        "m": record.m,
        "truth": distribution_to_doc(truth),
    }
    _finish(args, t0, payload, digests, seeds={"seed": args.seed, "profile_seed": args.seed,
                                              "sampling_seed": args.seed + 1},
            out=out / "simulate.json")


def cmd_mitigate_full(args, t0):
    record, ch, digests = _load(args)
    p = empirical_distribution(record)
    if args.method == "lsq":
        q = mitigate_full_lsq(p, ch, project=args.project)
        payload = {"method": "lsq", "distribution": distribution_to_doc(q), "nonnegative": q.is_nonnegative()}
    else:
        res = mitigate_full_ibu(p, ch, IbuConfig(args.max_iter, args.tol, args.init))
        q = res.q
        payload = {
            "method": "ibu",
            "distribution": distribution_to_doc(q),
            "iterations": res.iterations,
            "converged": res.converged,
            "objective": res.objective,
            "objective_trace": res.objective_trace,
        }
    payload["global_correlation"] = global_correlation(q)
    _finish(args, t0, payload, digests, ch.warnings, seeds={})


def cmd_mitigate_local(args, t0):
    record, ch, digests = _load(args)
    cfg = LocalProtocolConfig(args.l, args.groups, args.methods, args.seed, args.dedup)
    res = run_local_protocol(record, ch, cfg, IbuConfig(args.max_iter, args.tol, track_objective=False))
    payload = {
        "l": cfg.l,
        "methods": list(cfg.methods),
        "means": res.means,
        "skipped_lsq": res.skipped_lsq,
        "unconverged_ibu": res.unconverged_ibu,
        "groups": [{"subset": list(g.subset.indices), **g.values} for g in res.groups],
    }
    _finish(args, t0, payload, digests, ch.warnings, table=method_table(res))


def _em_config(args, k=None) -> EmConfig:
    return EmConfig(k or args.k, args.restarts, args.em_max_iter, args.em_tol, args.seed)


def _em_payload(res) -> dict:
    return {
        "model": mixture_to_doc(res.model),
        "avg_loglik": res.avg_loglik,
        "global_correlation": model_correlation(res.model),
        "iterations": res.iterations,
        "restart_index": res.restart_index,
        "converged": res.converged,
    }


def cmd_mitigate_structural(args, t0):
    record, ch, digests = _load(args)
    if args.k_max is not None:
        results = sweep_k(record, ch, args.k_max, _em_config(args))
        payload = {"sweep": [{"k": k, **_em_payload(r)} for k, r in enumerate(results, 1)]}
    else:
        payload = _em_payload(fit_mixture(record, ch, _em_config(args)))
    _finish(args, t0, payload, digests, ch.warnings)


def cmd_bootstrap(args, t0):
    record, ch, digests = _load(args)
    if args.statistic == "structural-cn":
        stat = structural_cn(ch, _em_config(args))
    else:
        cfg = LocalProtocolConfig(args.l, args.groups, (args.method,), args.seed)
        stat = local_cl(ch, cfg, args.method, IbuConfig(track_objective=False))
    res = bootstrap_statistic(record, BootstrapConfig(args.resamples, args.size, args.seed), stat)
    payload = {"statistic": args.statistic, "mean": res.mean, "std": res.std, "values": res.values}
    table = [(args.statistic, i, v) for i, v in enumerate(res.values)]
    _finish(args, t0, payload, digests, ch.warnings, table=table)


def cmd_oracle(args, t0):
    record, ch, digests = _load(args)
    if args.mode == "lre-grid":
        q, objective = brute_force_lre(empirical_distribution(record), ch, args.grid_step)
        payload = {"mode": args.mode, "distribution": distribution_to_doc(q), "objective": objective}
    else:
        model, ll = brute_force_mixture(record, ch, args.k)
        payload = {"mode": args.mode, "model": mixture_to_doc(model), "avg_loglik": ll}
    _finish(args, t0, payload, digests, ch.warnings, seeds={})


COMMANDS = {
    "simulate": cmd_simulate,
    "mitigate-full": cmd_mitigate_full,
    "mitigate-local": cmd_mitigate_local,
    "mitigate-structural": cmd_mitigate_structural,
    "bootstrap": cmd_bootstrap,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    t0 = time.perf_counter()
    try:
        COMMANDS[args.command](args, t0)
    except (ValidationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"readoutem {args.command}: invalid input: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        if not isinstance(exc, (ReadoutError, ArithmeticError, MemoryError, OSError)):
            log.exception("unexpected failure")
        print(f"readoutem {args.command}: failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
