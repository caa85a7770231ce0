"""Command-line entry point for the fractal percolation certifier."""
import argparse
import json
import logging
import sys
from pathlib import Path

# Ensure project root is on path (for fractalperc imports)
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import numpy as np
from pydantic import ValidationError

from app.config import LOG_LEVEL, RunConfig
from fractalperc import __version__
from fractalperc.alphabet import BoundaryProfile, catalan, enumerate_alphabet
from fractalperc.certificate import Certificate, Refusal, load_certificate, verify_certificate, write_certificate
from fractalperc.certify import (
    CertifyConfig,
    SiteConstant,
    baseline_bounds,
    certify_lower,
    certify_upper,
    certify_upper_from,
    fixed_point_candidate,
    get_plan,
    search_lower,
    search_upper,
)
from fractalperc.errors import CertifierError
from fractalperc.iterate import IterationConfig, LetterDistribution, iterate_tau, write_trajectory_csv
from fractalperc.mc import estimate, simulate_K, write_estimates_csv, write_pbm
from fractalperc.wordcode import CodeKind

logger = logging.getLogger("fractalperc")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REFUSED = 2


def setup_logging(level: str, log_file: str | None = None) -> None:
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    handlers[0].setFormatter(logging.Formatter("[%(levelname)s] %(name)s: %(message)s"))
    if log_file:
        # timestamps live only in the sidecar log
        fh = logging.FileHandler(log_file)
        fh.setFormatter(logging.Formatter("%(asctime)s [%(levelname)s] %(name)s: %(message)s"))
        handlers.append(fh)
    logging.basicConfig(level=level, handlers=handlers, force=True)


def parse_p_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fractalperc", description="Rigorous bounds for fractal percolation p_c(M).")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=None, help="parallel bisection steps / MC workers")
    parser.add_argument("--cache-dir", default=None, help="transition-table cache (env FRACTAL_CACHE_DIR)")
    parser.add_argument("--log-file", default=None, help="sidecar log with timestamps")
    parser.add_argument("--log-level", default=LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("alphabet", help="dump or count the letters of a profile")
    p.add_argument("--profile", required=True)
    p.add_argument("--count-only", action="store_true")
    p.add_argument("--output", default=None)

    p = sub.add_parser("certify", help="certify a lower or upper bound for p_c(M)")
    p.add_argument("kind", choices=["lower", "upper"])
    p.add_argument("-M", type=int, required=True)
    p.add_argument("--profile", default="1,1,1,1")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("-p", type=float, help="survival probability to certify")
    g.add_argument("--search", type=float, metavar="PRECISION", help="bisect for the best grid point")
    p.add_argument("--code", choices=[k.value for k in CodeKind], default=None)
    p.add_argument("--two-letter", action="store_true", help="use the alphabet {min, max}")
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--site-constant", type=float, default=None)
    p.add_argument("--delta", type=float, default=None, help="upper runs: x = tau^n(p - delta)")
    p.add_argument("--x-from", type=float, default=None, help="upper runs: x = tau^n(X_FROM)")
    p.add_argument("--x-max", type=float, default=None, help="upper runs, two letters: x = (max: X_MAX)")
    p.add_argument("--output", default=None)

    p = sub.add_parser("curve", help="tau_pi^n(p) trajectories as CSV")
    p.add_argument("-M", type=int, required=True)
    p.add_argument("--profile", default="1,1,1,1")
    p.add_argument("--p-list", required=True, type=parse_p_list)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--two-letter", action="store_true")
    p.add_argument("--output", default=None)

    p = sub.add_parser("simulate", help="Monte Carlo estimates of pi_n / theta_n")
    p.add_argument("-M", type=int, required=True)
    p.add_argument("-p", type=float, required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--stat", choices=["pi", "theta"], default="pi")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pbm", default=None, help="write one realization as a PBM image")
    p.add_argument("--output", default=None)

    p = sub.add_parser("verify", help="re-check a certificate file")
    p.add_argument("certificate")

    p = sub.add_parser("baseline", help="1/sqrt(M) and the M=2 bound from p_c(4)")
    p.add_argument("-M", type=int, required=True)
    p.add_argument("--pc4-upper", type=float, default=None)
    return parser


def run_config(args: argparse.Namespace) -> RunConfig:
    """Validate the parsed flags before any computation."""
    fields = {"command": args.command}
    if args.threads is not None:
        fields["threads"] = args.threads
    if args.cache_dir is not None:
        fields["cache_dir"] = args.cache_dir
    for name in ("M", "p", "n_max", "site_constant", "output", "seed", "code"):
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    if getattr(args, "search", None) is not None:
        fields["search_precision"] = args.search
    if getattr(args, "delta", None) is not None:
        fields["search_delta"] = args.delta
    if getattr(args, "profile", None):
        fields["profile"] = tuple(int(x) for x in args.profile.split(","))
    return RunConfig(**fields)


def certify_config(cfg: RunConfig, args: argparse.Namespace) -> CertifyConfig:
    return CertifyConfig(
        n_max=cfg.n_max,
        stagnation_tol=cfg.stagnation_tol,
        site_constant=SiteConstant(value=cfg.site_constant),
        code=CodeKind(cfg.code) if cfg.code else None,
        two_letter=getattr(args, "two_letter", False),
        search_delta=cfg.search_delta,
        threads=cfg.threads,
        cache_dir=Path(cfg.cache_dir),
        run=cfg.model_dump(mode="json"),
    )


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_alphabet(cfg: RunConfig, args: argparse.Namespace) -> int:
    profile = BoundaryProfile(*cfg.profile)
    if args.count_only:
        _emit(f"{catalan(profile.n)}\n", cfg.output)
    else:
        _emit("\n".join(a for a in enumerate_alphabet(profile).dump().splitlines()[1:]) + "\n", cfg.output)
    return EXIT_OK


def _emit_result(result: Certificate | Refusal | None, output: str | None) -> int:
    if result is None:
        logger.warning("search found no certified grid point")
        return EXIT_REFUSED
    if output:
        write_certificate(result, output)
    else:
        sys.stdout.write(result.model_dump_json(indent=2) + "\n")
    return EXIT_OK if isinstance(result, Certificate) else EXIT_REFUSED


def cmd_certify(cfg: RunConfig, args: argparse.Namespace) -> int:
    profile = BoundaryProfile(*cfg.profile)
    config = certify_config(cfg, args)
    if cfg.search_precision is not None:
        search = search_lower if args.kind == "lower" else search_upper
        found = search(cfg.M, profile, cfg.search_precision, config)
        logger.info("search: best certified %s, bracketing refusal %s", found.best, found.bracket)
        return _emit_result(found.certificate or found.refusal, cfg.output)
    if args.kind == "lower":
        return _emit_result(certify_lower(cfg.M, profile, cfg.p, config), cfg.output)
    if args.x_max is not None:
        # x = (max: X_MAX) lives on the two-letter alphabet
        if config.code not in (None, CodeKind.STRONG_ALL_SIDES):
            raise ValueError(f"--x-max needs the strong_all_sides code, got {config.code.value}")
        config.two_letter = True
        config.code = CodeKind.STRONG_ALL_SIDES
        plan = get_plan(cfg.M, profile, CodeKind.STRONG_ALL_SIDES, True, config)
        mass = np.zeros(len(plan.alphabet))
        mass[plan.alphabet.max_index] = args.x_max
        x = LetterDistribution(plan.alphabet, mass, "min")
        return _emit_result(certify_upper(cfg.M, profile, cfg.p, x, config), cfg.output)
    if args.x_from is not None:
        run = fixed_point_candidate(cfg.M, profile, args.x_from, config)
        return _emit_result(certify_upper(cfg.M, profile, cfg.p, run.final, config, run.n, run.stop_reason), cfg.output)
    return _emit_result(certify_upper_from(cfg.M, profile, cfg.p, config), cfg.output)


def cmd_curve(cfg: RunConfig, args: argparse.Namespace) -> int:
    profile = BoundaryProfile(*cfg.profile)
    config = certify_config(cfg, args)
    plan = get_plan(cfg.M, profile, CodeKind.WEAK, config.two_letter, config)
    rows = []
    for p in args.p_list:
        result = iterate_tau(plan, IterationConfig(p=p, n_max=cfg.n_max, sink="max", stagnation_tol=None))
        rows.extend(result.trajectory)
    if cfg.output:
        write_trajectory_csv(rows, cfg.output)
    else:
        write_trajectory_csv(rows, sys.stdout)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args: argparse.Namespace) -> int:
    if args.pbm:
        write_pbm(simulate_K(cfg.M, cfg.p, args.n, cfg.seed), args.pbm)
    est = estimate(cfg.M, cfg.p, args.n, args.trials, args.stat, seed=cfg.seed, threads=cfg.threads)
    write_estimates_csv([est], cfg.output or sys.stdout)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args: argparse.Namespace) -> int:
    cert = load_certificate(args.certificate)
    ok = verify_certificate(cert)
    print(json.dumps({"certificate": args.certificate, "kind": cert.kind, "valid": ok}))
    return EXIT_OK if ok else EXIT_REFUSED


def cmd_baseline(cfg: RunConfig, args: argparse.Namespace) -> int:
    lower, upper = baseline_bounds(cfg.M, args.pc4_upper)
    print(json.dumps({"M": cfg.M, "lower": repr(lower), "upper": repr(upper) if upper is not None else None}))
    return EXIT_OK


COMMANDS = {
    "alphabet": cmd_alphabet,
    "certify": cmd_certify,
    "curve": cmd_curve,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "baseline": cmd_baseline,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level.upper(), args.log_file)
    try:
        cfg = run_config(args)
        return COMMANDS[args.command](cfg, args)
    except (CertifierError, ValidationError, ValueError, OSError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
