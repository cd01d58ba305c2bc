"""Command-line front end: ``eprsim {run,sweep,dice,validate}``.

Exit codes: 0 success, 1 invalid input or config, 2 unphysical state,
3 a verified criterion failed. Summary lines are ``key=value``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

from .errors import EprSimError, InvalidConfig, InvalidState
from .experiments import (
    MAX_SQUEEZE,
    EprExperimentConfig,
    dumps,
    run_dice_experiment,
    run_epr_experiment,
    sweep_csv,
    sweep_squeeze,
)
from .gaussian import FlipConvention, GaussianState, validate_physicality
from .measurement import analytic_criteria, heisenberg_product

log = logging.getLogger("eprsim")

EXIT_OK, EXIT_INPUT, EXIT_UNPHYSICAL, EXIT_CRITERION = 0, 1, 2, 3

RUN_KEYS = {"r", "r_a", "r_b", "shots", "seed", "bins", "half_width", "convention", "workers", "out", "format"}
SWEEP_KEYS = {"r", "shots", "seed", "bins", "convention", "workers", "out", "format"}
DICE_KEYS = {"n", "seed", "out", "format"}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


# --- helpers --------------------------------------------------------------


def load_config(path: str | None, allowed: set) -> dict:
    """Read a flat JSON config file; unknown keys are rejected."""
    if path is None:
        return {}
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError(f"config file not found: {p}") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot parse config file {p}: {exc}") from None
    if not isinstance(data, dict):
        raise CliError(f"config file {p} must hold a JSON object")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise CliError(f"config file {p}: unknown keys {unknown}")
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise CliError(f"config file {p}: keys must be flat, got nested {nested}")
    return data


def merge(config: dict, args: argparse.Namespace, keys: set) -> dict:
    """Flag values win over file values; unset flags fall through."""
    merged = dict(config)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def parse_r_spec(spec) -> list[float]:
    """``"start:stop:step"`` (stop inclusive), ``"a,b,c"``, a number, or a list."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return [float(spec)]
    if isinstance(spec, list):
        try:
            return [float(v) for v in spec]
        except (TypeError, ValueError):
            raise CliError(f"r list must hold numbers, got {spec!r}") from None
    if not isinstance(spec, str) or not spec.strip():
        raise CliError("empty r grid")
    spec = spec.strip()
    try:
        if ":" in spec:
            parts = [float(v) for v in spec.split(":")]
            if len(parts) != 3:
                raise ValueError("expected start:stop:step")
            start, stop, step = parts
            if step <= 0:
                raise ValueError("step must be positive")
            count = math.floor((stop - start) / step + 1e-9) + 1
            values = [start + i * step for i in range(max(count, 0))]
        else:
            values = [float(v) for v in spec.split(",") if v.strip()]
    except ValueError as exc:
        raise CliError(f"bad r grid {spec!r}: {exc}") from None
    if not values:
        raise CliError(f"r grid {spec!r} is empty")
    return values


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(out_dir: str, files: dict) -> None:
    """Write every prepared file; content is computed before anything touches disk."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise CliError(f"output directory is not writable: {out}")
        for name, text in files.items():
            atomic_write(out / name, text)
    except OSError as exc:
        raise CliError(f"cannot write outputs to {out}: {exc}") from None


def with_metadata(doc: dict, timestamp: bool) -> dict:
    if timestamp:
        doc = dict(doc)
        doc["metadata"] = {"generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    return doc


def summary(**pairs) -> None:
    for key, value in pairs.items():
        if isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, float):
            value = f"{value:.6g}"
        print(f"{key}={value}")


def _wants(fmt: str, kind: str) -> bool:
    if fmt not in ("json", "csv", "both"):
        raise CliError(f"format must be json, csv or both, got {fmt!r}")
    return fmt in (kind, "both")


def _epr_config(values: dict) -> EprExperimentConfig:
    values = dict(values)
    r = values.pop("r", None)
    if r is not None:
        values.setdefault("r_a", r)
        values.setdefault("r_b", r)
    fields = {k: values[k] for k in ("r_a", "r_b", "shots", "seed", "bins", "half_width", "convention", "workers")
              if k in values}
    return EprExperimentConfig(**fields)


# --- commands -------------------------------------------------------------


def cmd_run(args) -> int:
    values = merge(load_config(args.config, RUN_KEYS), args, RUN_KEYS)
    cfg = _epr_config(values)
    fmt = values.get("format", "both")
    out = values.get("out", "eprsim-out")
    log.info("running EPR pipeline with %s", cfg)
    report, batch_x, batch_y = run_epr_experiment(cfg)

    files = {}
    if _wants(fmt, "json"):
        files["report.json"] = dumps(with_metadata(report.to_dict(), args.timestamp))
        files["state.json"] = dumps(report.state.to_dict())
    if _wants(fmt, "csv"):
        for key, hist in report.histograms.items():
            files[f"hist_{key}.csv"] = hist.to_csv()
        for key, hist in report.residual_histograms.items():
            files[f"hist_residual_{key.replace('|', '_given_')}.csv"] = hist.to_csv()
    if args.save_shots:
        for tag, batch in (("X", batch_x), ("Y", batch_y)):
            files[f"shots_{tag}.csv"] = batch.to_csv()
            files[f"shots_{tag}.json"] = batch.sidecar_json()
    write_outputs(out, files)

    residual = report.residual_variance["X_B|X_A"]
    summary(
        duan_analytic=report.analytic.duan,
        duan_sampled=report.sampled.duan,
        duan_se=report.sampled.standard_errors["duan"],
        epr_violation=report.analytic.duan_violated,
        reid_analytic=report.analytic.reid["A->B"],
        residual_variance=residual["sampled"],
        consistent=report.consistent,
        out=out,
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    values = merge(load_config(args.config, SWEEP_KEYS), args, SWEEP_KEYS)
    if "r" not in values:
        raise CliError("sweep needs --r (e.g. --r 0:2:0.5)")
    r_values = parse_r_spec(values["r"])
    for r in r_values:
        if not (0.0 <= r <= MAX_SQUEEZE):
            raise CliError(f"r={r} outside the allowed range [0, {MAX_SQUEEZE}]")
    template = _epr_config({k: v for k, v in values.items() if k in ("shots", "seed", "bins", "convention", "workers")})
    rows = sweep_squeeze(r_values, template)
    fmt = values.get("format", "both")
    files = {}
    if _wants(fmt, "csv"):
        files["sweep.csv"] = sweep_csv(rows)
    if _wants(fmt, "json"):
        doc = {"schema_version": "1", "kind": "sweep", "template": template.to_dict(),
               "rows": [row.__dict__ for row in rows]}
        files["sweep.json"] = dumps(with_metadata(doc, args.timestamp))
    out = values.get("out", "eprsim-out")
    write_outputs(out, files)
    for row in rows:
        print(f"r={row.r:.6g} duan_analytic={row.duan_analytic:.6g} duan_sampled={row.duan_sampled:.6g} "
              f"duan_se={row.duan_se:.3g} reid={row.reid:.6g} heisenberg={row.heisenberg:.6g}")
    summary(rows=len(rows), out=out)
    return EXIT_OK


def cmd_dice(args) -> int:
    values = merge(load_config(args.config, DICE_KEYS), args, DICE_KEYS)
    if "n" not in values:
        raise CliError("dice needs --n")
    try:
        report = run_dice_experiment(values["n"], values.get("seed", 0))
    except EprSimError as exc:
        raise CliError(str(exc)) from None
    fmt = values.get("format", "both")
    files = {}
    if _wants(fmt, "json"):
        files["dice.json"] = dumps(with_metadata(report.to_dict(), args.timestamp))
    if _wants(fmt, "csv"):
        lines = ["face,top_frequency,bottom_frequency"]
        for face, (pt, pb) in enumerate(zip(report.top_frequencies, report.bottom_frequencies), start=1):
            lines.append(f"{face},{pt:.17g},{pb:.17g}")
        files["dice_faces.csv"] = "\n".join(lines) + "\n"
    out = values.get("out", "eprsim-out")
    write_outputs(out, files)
    summary(n=report.n_throws, prediction_accuracy=report.prediction_accuracy,
            constraint_fraction=report.constraint_fraction, p_value=report.p_value,
            entropy_top=report.entropy_top, conditional_entropy=report.conditional_entropy, out=out)
    return EXIT_OK


def cmd_validate(args) -> int:
    path = Path(args.state)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        state = GaussianState.from_dict(data)
    except FileNotFoundError:
        raise CliError(f"state file not found: {path}") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError, AttributeError, InvalidState) as exc:
        raise CliError(f"malformed state file {path}: {exc}") from None

    report = validate_physicality(state)
    summary(n_modes=state.n_modes,
            symplectic_eigenvalues=",".join(f"{v:.12g}" for v in report.symplectic_eigenvalues),
            physical=report.physical)
    if not report.physical:
        return EXIT_UNPHYSICAL
    for mode in range(state.n_modes):
        summary(**{f"heisenberg_{mode}": heisenberg_product(state, mode)})
    if state.n_modes == 2:
        crit = analytic_criteria(state, args.convention)
        summary(duan=crit.duan, epr_violation=crit.duan_violated, reid=crit.reid["A->B"])
        if args.verify and not crit.duan_violated:
            return EXIT_CRITERION
    elif args.verify:
        raise CliError("--verify checks the two-mode EPR criterion; state has "
                       f"{state.n_modes} modes")
    return EXIT_OK


# --- parser ---------------------------------------------------------------


def _u64(text: str) -> int:
    value = int(text)
    if not (0 <= value < 2**64):
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eprsim", description="Gaussian EPR experiment simulator")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, shots=True):
        p.add_argument("--config", help="flat JSON config file; flags override its values")
        p.add_argument("--seed", type=_u64)
        if shots:
            p.add_argument("--shots", type=int)
        p.add_argument("--out", help="output directory (default ./eprsim-out)")
        p.add_argument("--format", choices=("json", "csv", "both"))
        p.add_argument("--timestamp", action="store_true",
                       help="add metadata.generated_at to JSON outputs (breaks byte-identity)")

    run = sub.add_parser("run", help="squeezed inputs -> splitter -> homodyne -> criteria")
    common(run)
    run.add_argument("--r", type=float, help="squeeze factor for both inputs")
    run.add_argument("--r-a", dest="r_a", type=float)
    run.add_argument("--r-b", dest="r_b", type=float)
    run.add_argument("--bins", type=int)
    run.add_argument("--half-width", dest="half_width", type=float)
    run.add_argument("--convention", choices=[c.value for c in FlipConvention])
    run.add_argument("--workers", type=int)
    run.add_argument("--save-shots", action="store_true", help="also write both shot ensembles as CSV")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="criteria over a grid of squeeze factors")
    common(sweep)
    sweep.add_argument("--r", help="start:stop:step (inclusive) or comma list")
    sweep.add_argument("--bins", type=int)
    sweep.add_argument("--convention", choices=[c.value for c in FlipConvention])
    sweep.add_argument("--workers", type=int)
    sweep.set_defaults(func=cmd_sweep)

    dice = sub.add_parser("dice", help="classical dice analogue")
    common(dice, shots=False)
    dice.add_argument("--n", type=int, help="number of throws")
    dice.set_defaults(func=cmd_dice)

    validate = sub.add_parser("validate", help="check a state file against the uncertainty bound")
    validate.add_argument("state", help="JSON file with 'mean' and 'cov'")
    validate.add_argument("--verify", action="store_true",
                          help="exit 3 unless the two-mode state violates the EPR product bound")
    validate.add_argument("--convention", default="standard", choices=[c.value for c in FlipConvention])
    validate.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InvalidState as exc:
        print(f"error: unphysical state: {exc}", file=sys.stderr)
        return EXIT_UNPHYSICAL
    except InvalidConfig as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EprSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
