"""``harq-csi`` command line: run experiment grids and check configurations.

Configurations are flat ``key = value`` files; any key can be overridden on
the command line.  Results go to a CSV with one row per SNR point and a
``.meta`` sidecar in the same flat format.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .dp import MAX_SLOTS, dp_full_csi_throughput
from .ergodic import ergodic_full_csi, ergodic_no_csi, ergodic_partial_csi
from .errors import ConvergenceError, DomainError, UnsupportedError
from .fading import rayleigh_model
from .optimizer import db_to_power, optimize_plan
from .outage import outage_full_csi, outage_no_csi, outage_partial_csi
from .protocol import ProtocolKind
from .search import SearchSpec
from .simulator import simulate

CASES = (
    "ergodic-no-csi", "ergodic-partial", "ergodic-full",
    "outage-no-csi", "outage-partial", "outage-full",
    "harq-classical", "harq-new", "dp-full-csi",
)
HEADER = "snr_db,eta_bits,eta_nats,ratio_full_csi,p_out,mean_renewal,mean_power,mc_eta,mc_se"
INF = math.inf

EXIT_OK, EXIT_CONFIG, EXIT_UNSUPPORTED, EXIT_NUMERIC = 0, 2, 3, 4

_NO_FEEDBACK_RULE = "M >= 2 with F = 1 is impossible: at least 1 bit is needed for ack/nack"


@dataclass
class ExperimentConfig:
    case: str = "harq-new"
    kind: str | None = None
    M: float | None = None
    F: float | None = None
    snr_db_grid: tuple = (-25.0, -20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
    seed: int = 0
    mc_renewals: int = 0
    output_path: str = "results.csv"
    restarts: int = 4

    def resolved(self) -> "ExperimentConfig":
        """Fill in the slot/feedback counts implied by the case."""
        M, F = self.M, self.F
        if self.case.startswith("ergodic"):
            M = INF if M is None else M
            F = {"ergodic-no-csi": 1, "ergodic-full": INF}.get(self.case, F if F is not None else 2)
        elif self.case.startswith("outage"):
            M = 1 if M is None else M
            F = {"outage-no-csi": 1, "outage-full": INF}.get(self.case, F if F is not None else 2)
        elif self.case == "dp-full-csi":
            M = 2 if M is None else M
            F = INF if F is None else F
        else:
            M = 2 if M is None else M
            F = 2 if F is None else F
        return replace(self, M=M, F=F)


@dataclass
class Finding:
    level: str  # "error", "unsupported" or "note"
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.message}"


def _number(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "infinity", "+inf"):
        return INF
    v = float(t)
    return int(v) if v.is_integer() else v


def parse_grid(text: str) -> tuple:
    """``"a:b:step"`` (inclusive) or a comma separated list."""
    text = text.strip()
    if not text:
        return ()
    if ":" in text:
        a, b, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ValueError("grid step must be positive")
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        return tuple(round(a + k * step, 10) for k in range(max(n, 0)))
    return tuple(float(x) for x in text.split(",") if x.strip())


_ALIASES = {"snr_grid": "snr_db_grid", "snr-grid": "snr_db_grid", "mc": "mc_renewals", "out": "output_path",
            "m": "M", "f": "F"}


def _coerce(key: str, value: str):
    if key == "snr_db_grid":
        return parse_grid(value)
    if key in ("M", "F"):
        return _number(value)
    if key in ("seed", "mc_renewals", "restarts"):
        return int(value)
    if key == "kind":
        return value.strip().lower() or None
    return value.strip()


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a ``key = value`` file (``#`` starts a comment) and apply overrides."""
    values: dict = {}
    known = {f.name for f in fields(ExperimentConfig)}
    if path is not None:
        for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {n}: expected key = value")
            k, v = (x.strip() for x in line.split("=", 1))
            k = _ALIASES.get(k, k)
            if k not in known:
                raise ValueError(f"line {n}: unknown key {k!r}")
            values[k] = _coerce(k, v)
    for k, v in (overrides or {}).items():
        if v is not None:
            k = _ALIASES.get(k, k)
            values[k] = _coerce(k, v) if isinstance(v, str) else v
    return ExperimentConfig(**values)


def validate(config: ExperimentConfig) -> list[Finding]:
    """Structural checks only; nothing is computed."""
    out: list[Finding] = []
    if config.case not in CASES:
        return [Finding("error", f"unknown case {config.case!r}; expected one of {', '.join(CASES)}")]
    c = config.resolved()
    M, F = c.M, c.F
    if not c.snr_db_grid:
        out.append(Finding("error", "the SNR grid is empty"))
    if c.mc_renewals < 0:
        out.append(Finding("error", "mc_renewals must be >= 0"))
    if c.restarts < 1:
        out.append(Finding("error", "restarts must be >= 1"))
    needs_kind = c.case.startswith("harq") or c.case == "dp-full-csi"
    if needs_kind:
        if c.kind is None:
            out.append(Finding("error", f"case {c.case} needs kind (alo, rtd or inr)"))
        else:
            try:
                ProtocolKind.parse(c.kind)
            except DomainError:
                out.append(Finding("error", f"unknown kind {c.kind!r}"))
    if M is None or F is None or not (M >= 1 and F >= 1):
        out.append(Finding("error", "M and F must be at least 1"))
        return out
    if M >= 2 and F == 1:
        out.append(Finding("error", _NO_FEEDBACK_RULE))
    if c.case.startswith("ergodic") and M != INF:
        out.append(Finding("error", "ergodic cases have unlimited slots (M = inf)"))
    if c.case == "ergodic-partial" and not (2 <= F < INF):
        out.append(Finding("error", "ergodic-partial needs a finite F >= 2"))
    if c.case.startswith("outage") and M != 1:
        out.append(Finding("error", "outage cases are single-slot (M = 1)"))
    if c.case == "outage-partial" and not (2 <= F < INF):
        out.append(Finding("error", "outage-partial needs a finite F >= 2"))
    if c.case.startswith("harq"):
        if M == INF or F == INF:
            out.append(Finding("error", "HARQ cases need finite M and F"))
        elif c.case == "harq-classical":
            if M < 2:
                out.append(Finding("error", "classical HARQ needs M >= 2"))
            if F != 2:
                out.append(Finding("error", "classical HARQ uses the 1-bit ack/nack only (F = 2)"))
        if M != INF and M > 3 and c.mc_renewals == 0 and c.kind and c.kind != "alo":
            out.append(Finding("unsupported",
                               f"{c.kind.upper()} with M = {M:g} > 3 has no analytic tables; rerun with --mc <n>"))
    if c.case == "dp-full-csi":
        if F != INF:
            out.append(Finding("error", "dp-full-csi assumes perfect CSI (F = inf)"))
        if M == INF or M > MAX_SLOTS:
            out.append(Finding("unsupported", f"the grid dynamic program handles M <= {MAX_SLOTS}"))
    if M == 1 and (needs_kind or c.case.startswith("outage")):
        out.append(Finding("note", "with M = 1 all protocol kinds have the same throughput"))
    if c.mc_renewals and not c.case.startswith("harq"):
        out.append(Finding("note", "Monte Carlo columns are only produced for HARQ cases"))
    return out


@dataclass
class Row:
    snr_db: float
    eta: float
    ratio: float
    p_out: float | None = None
    mean_renewal: float | None = None
    mean_power: float | None = None
    mc_eta: float | None = None
    mc_se: float | None = None
    extra: dict = field(default_factory=dict)

    def csv(self) -> str:
        def fmt(v):
            return "" if v is None else f"{v:.12g}"

        vals = [self.snr_db, self.eta / math.log(2.0), self.eta, self.ratio, self.p_out,
                self.mean_renewal, self.mean_power, self.mc_eta, self.mc_se]
        return ",".join(fmt(v) for v in vals)


def _point(c: ExperimentConfig, db: float, prev_plan):
    model = rayleigh_model()
    p = db_to_power(db)
    wf, _ = ergodic_full_csi(p, model)
    F = int(c.F) if c.F != INF else None
    plan = None
    if c.case == "ergodic-no-csi":
        row = Row(db, ergodic_no_csi(p, model), 0.0, mean_power=p)
    elif c.case == "ergodic-partial":
        eta, _ = ergodic_partial_csi(p, F, model)
        row = Row(db, eta, 0.0, mean_power=p)
    elif c.case == "ergodic-full":
        row = Row(db, wf, 0.0, mean_power=p)
    elif c.case == "outage-no-csi":
        eta, s = outage_no_csi(p, model)
        row = Row(db, eta, 0.0, float(model.cdf(s)), 1.0, p)
    elif c.case == "outage-partial":
        eta, q = outage_partial_csi(p, F, model)
        row = Row(db, eta, 0.0, q.outage_probability(model), 1.0, q.average_power(model))
    elif c.case == "outage-full":
        eta, cutoff = outage_full_csi(p, model)
        row = Row(db, eta, 0.0, float(model.cdf(cutoff)), 1.0, p)
    elif c.case == "dp-full-csi":
        r = dp_full_csi_throughput(c.kind, int(c.M), p, model=model)
        row = Row(db, r.eta, 0.0, r.p_out, r.mean_renewal, r.mean_power)
    else:
        table_kw = {"mc_renewals": c.mc_renewals, "seed": c.seed} if c.mc_renewals else {}
        spec = SearchSpec(restarts=c.restarts, seed=c.seed, tol=1e-11,
                          max_evals=150 * int(c.M) * (1 if c.case == "harq-classical" else F) + 200)
        plan, rep = optimize_plan(c.kind, int(c.M), F, p, spec, model,
                                  classical=c.case == "harq-classical", init=prev_plan, **table_kw)
        row = Row(db, rep.eta, 0.0, rep.p_out, rep.mean_renewal, rep.mean_power)
        if c.mc_renewals:
            st = simulate(c.kind, plan, c.mc_renewals, seed=c.seed, model=model)
            row.mc_eta, row.mc_se = st.eta, st.se_eta
    row.ratio = row.eta / wf
    return row, plan


def run(config: ExperimentConfig, stream=None) -> int:
    """Evaluate every grid point and write the CSV plus its ``.meta`` sidecar."""
    stream = stream or sys.stderr
    findings = validate(config)
    for f in findings:
        print(str(f), file=stream)
    if any(f.level == "error" for f in findings):
        return EXIT_CONFIG
    if any(f.level == "unsupported" for f in findings):
        return EXIT_UNSUPPORTED
    c = config.resolved()
    start = time.perf_counter()
    rows, prev = [], None
    try:
        for db in c.snr_db_grid:
            row, prev = _point(c, float(db), prev)
            rows.append(row)
    except UnsupportedError as exc:
        print(f"unsupported: {exc}", file=stream)
        return EXIT_UNSUPPORTED
    except ConvergenceError as exc:
        print(f"numerical failure: {exc}", file=stream)
        return EXIT_NUMERIC
    except DomainError as exc:
        print(f"error: {exc}", file=stream)
        return EXIT_CONFIG
    out = Path(c.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join([HEADER] + [r.csv() for r in rows]) + "\n")
    meta = {
        "case": c.case, "kind": c.kind or "", "M": f"{c.M:g}", "F": f"{c.F:g}",
        "snr_db_grid": ",".join(f"{x:g}" for x in c.snr_db_grid), "seed": c.seed,
        "mc_renewals": c.mc_renewals, "restarts": c.restarts, "tool_version": __version__,
        "numpy_version": np.__version__, "wall_time_s": f"{time.perf_counter() - start:.3f}",
    }
    Path(str(out) + ".meta").write_text("".join(f"{k} = {v}\n" for k, v in meta.items()))
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="harq-csi", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="evaluate a configuration and write CSV")
    v = sub.add_parser("validate", help="check a configuration without computing")
    for p in (r, v):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--case", choices=CASES)
        p.add_argument("--kind")
        p.add_argument("--M", dest="M")
        p.add_argument("--F", dest="F")
        p.add_argument("--snr-grid", dest="snr_db_grid", help="a:b:step or comma list (use --snr-grid=-25:25:5)")
        p.add_argument("--mc", dest="mc_renewals")
        p.add_argument("--seed")
        p.add_argument("--restarts")
        p.add_argument("--out", dest="output_path")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
    try:
        config = load_config(args.config, overrides)
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        findings = validate(config)
        for f in findings:
            print(str(f))
        if any(f.level == "error" for f in findings):
            return EXIT_CONFIG
        if any(f.level == "unsupported" for f in findings):
            return EXIT_UNSUPPORTED
        return EXIT_OK
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
