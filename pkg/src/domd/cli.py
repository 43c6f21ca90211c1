"""Config parsing, experiment orchestration, and CSV trace emission.

Config files are flat `key = value` lines with `#` comments. Every key is
validated up front (unknown keys and duplicates are errors) and the output
trace echoes the full resolved configuration plus the realized curvature
constants as `#`-prefixed header lines, so a regret bound can be recomputed
from the file alone. Numbers are serialized with 17 significant digits,
which round-trips doubles exactly; reruns of the same (config, seed) produce
byte-identical files.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .algorithms import RunConfig, run_experiment
from .data import parse_libsvm, partition
from .geometry import FeasibleSet, MirrorMap
from .losses import LossStream, logistic_stream, ridge_stream, synthetic_quadratic_stream
from .topology import generate_topology

__all__ = ["ExperimentConfig", "parse_config", "execute", "seed_streams", "main"]

CSV_COLUMNS = [
    "t",
    "K_t",
    "sigma2",
    "global_loss_y",
    "global_loss_x",
    "cum_regret_y",
    "cum_regret_x",
    "C_t",
    "max_disagreement",
    "delta_norm",
    "delta_small_norm",
    "lemma1_slack",
    "xbar_to_opt",
]

_ALGO_ALIASES = {"madgc": "madgc", "single": "domd_single", "central": "centralized"}


@dataclass
class ExperimentConfig:
    algorithm: str
    topology: str
    nodes: int
    loss: str
    eta: float
    T: int
    seed: int = 0
    k_policy: str = "paper"
    mirror: str = "euclidean"
    feasible: str = "ball:1"
    dim: int = 2
    lam: float = 1.0
    drift: str = "walk:0.01"
    batch: int = 10
    reg_lambda: float = 0.0
    dataset: str = ""
    partition: str = "contiguous"
    target_class: float = 1.0
    diagnostics: bool = True
    entropy_eps: float = 1e-6
    lazy_alpha: float = 0.0
    init: str = "center"
    out_dir: str = "."
    run_name: str = "run"


_KEY_TO_FIELD = {
    "algorithm": "algorithm",
    "topology": "topology",
    "nodes": "nodes",
    "loss": "loss",
    "eta": "eta",
    "T": "T",
    "seed": "seed",
    "K_policy": "k_policy",
    "mirror": "mirror",
    "feasible": "feasible",
    "dim": "dim",
    "lambda": "lam",
    "drift": "drift",
    "batch": "batch",
    "reg_lambda": "reg_lambda",
    "dataset": "dataset",
    "partition": "partition",
    "target_class": "target_class",
    "diagnostics": "diagnostics",
    "entropy_eps": "entropy_eps",
    "lazy_alpha": "lazy_alpha",
    "init": "init",
    "out_dir": "out_dir",
    "run_name": "run_name",
}
_REQUIRED_KEYS = ("algorithm", "topology", "nodes", "loss", "eta", "T")


def _parse_value(key: str, raw: str, lineno: int):
    field_types = {f.name: f.type for f in fields(ExperimentConfig)}
    name = _KEY_TO_FIELD[key]
    ftype = field_types[name]
    try:
        if ftype == "bool":
            low = raw.lower()
            if low in ("on", "true", "1", "yes"):
                return True
            if low in ("off", "false", "0", "no"):
                return False
            raise ValueError
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ValueError(f"unparsable value '{raw}' for key '{key}' at line {lineno}") from None


def parse_config(path: str | Path) -> ExperimentConfig:
    """Read and fully validate a key = value config file."""
    text = Path(path).read_text(encoding="utf-8")
    seen: dict[str, int] = {}
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key:
            raise ValueError(f"expected 'key = value' at line {lineno}")
        if key in seen:
            raise ValueError(f"duplicate key at line {lineno}")
        seen[key] = lineno
        if key not in _KEY_TO_FIELD:
            raise ValueError(f"unknown key '{key}' at line {lineno}")
        values[_KEY_TO_FIELD[key]] = _parse_value(key, value, lineno)
    for key in _REQUIRED_KEYS:
        if _KEY_TO_FIELD[key] not in values:
            raise ValueError(f"missing required key '{key}'")
    config = ExperimentConfig(**values)  # type: ignore[arg-type]
    _validate(config)
    return config


def _validate(config: ExperimentConfig) -> None:
    if config.algorithm in _ALGO_ALIASES:
        config.algorithm = _ALGO_ALIASES[config.algorithm]
    if config.algorithm not in ("madgc", "domd_single", "centralized"):
        raise ValueError(f"unknown algorithm '{config.algorithm}'")
    if config.eta <= 0:
        raise ValueError("eta must be positive")
    if config.T < 1:
        raise ValueError("T must be >= 1")
    if config.nodes < 1:
        raise ValueError("nodes must be >= 1")
    if config.loss not in ("quadratic", "logistic", "ridge"):
        raise ValueError(f"unknown loss '{config.loss}'")
    if config.loss in ("logistic", "ridge") and not config.dataset:
        raise ValueError(f"loss '{config.loss}' requires a dataset path")
    if config.mirror not in ("euclidean", "entropy"):
        raise ValueError(f"unknown mirror '{config.mirror}'")
    if config.mirror == "entropy" and not config.feasible.startswith("simplex"):
        raise ValueError("mirror 'entropy' requires feasible = simplex")
    kp = config.k_policy
    if not (kp in ("paper", "single") or kp.startswith("fixed:")):
        raise ValueError(f"unknown K_policy '{kp}'")
    if kp.startswith("fixed:"):
        try:
            k = int(kp.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"unparsable K_policy '{kp}'") from None
        if k < 1:
            raise ValueError("fixed K must be >= 1")
    if config.partition not in ("contiguous", "round_robin"):
        raise ValueError(f"unknown partition policy '{config.partition}'")


def seed_streams(master_seed: int, n: int) -> list[np.random.Generator]:
    """n+2 independent generators: nodes 0..n-1, topology n, loss drift n+1.

    Stream k is a pure function of (master_seed, k) through seed-sequence
    spawn keys, so any stream can be reproduced in isolation.
    """
    return [
        np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(k,)))
        for k in range(n + 2)
    ]


def _child_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=(index,)).generate_state(1)[0])


def _build_feasible(config: ExperimentConfig, dim: int) -> FeasibleSet:
    kind, _, rest = config.feasible.partition(":")
    if kind == "ball":
        return FeasibleSet("ball", dim, r=float(rest) if rest else 1.0)
    if kind == "box":
        lo_s, _, hi_s = rest.partition(":")
        return FeasibleSet("box", dim, lo=float(lo_s), hi=float(hi_s))
    if kind == "simplex":
        return FeasibleSet("simplex", dim, eps=config.entropy_eps)
    raise ValueError(f"unknown feasible set '{config.feasible}'")


def _parse_drift(spec: str) -> tuple:
    kind, _, rest = spec.partition(":")
    if kind == "walk":
        return ("random_walk", float(rest) if rest else 0.01)
    if kind == "sine":
        amp_s, _, period_s = rest.partition(":")
        return ("sinusoid", float(amp_s), float(period_s))
    raise ValueError(f"unknown drift spec '{spec}'")


def _build_stream(config: ExperimentConfig, feasible: FeasibleSet, stream_seed: int) -> LossStream:
    if config.loss == "quadratic":
        return synthetic_quadratic_stream(
            config.nodes, config.dim, config.lam, _parse_drift(config.drift),
            stream_seed, feasible,
        )
    examples, _ = parse_libsvm(Path(config.dataset).read_text(encoding="utf-8"))
    shards = partition(examples, config.nodes, config.partition, stream_seed)
    if config.loss == "logistic":
        return logistic_stream(
            shards, config.batch, config.reg_lambda,
            dim=feasible.dim, radius=feasible.radius, target_class=config.target_class,
        )
    return ridge_stream(
        shards, config.batch, config.reg_lambda, dim=feasible.dim, radius=feasible.radius
    )


def build_run_config(config: ExperimentConfig) -> RunConfig:
    """Assemble topology, geometry, and stream objects from a validated config."""
    if config.loss == "quadratic":
        dim = config.dim
    else:
        _, dim = parse_libsvm(Path(config.dataset).read_text(encoding="utf-8"))
        if dim < 1:
            raise ValueError("dataset has no features")
        config.dim = dim
    mirror = MirrorMap(config.mirror, eps=config.entropy_eps)
    feasible = _build_feasible(config, dim)
    schedule = generate_topology(
        config.topology, config.nodes, _child_seed(config.seed, config.nodes),
        lazy_alpha=config.lazy_alpha,
    )
    stream = _build_stream(config, feasible, _child_seed(config.seed, config.nodes + 1))
    kp = config.k_policy
    k_fixed = int(kp.split(":", 1)[1]) if kp.startswith("fixed:") else None
    return RunConfig(
        algorithm=config.algorithm,
        eta=config.eta,
        T=config.T,
        schedule=schedule,
        mirror=mirror,
        feasible=feasible,
        stream=stream,
        seed=config.seed,
        k_policy="fixed" if k_fixed is not None else kp,
        k_fixed=k_fixed,
        diagnostics=config.diagnostics,
        init=config.init,
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def execute(config: ExperimentConfig) -> Path:
    """Run the configured experiment and write out_dir/run_name.csv."""
    run = build_run_config(config)
    traces, header = run_experiment(run)

    echo_keys = [
        ("algorithm", config.algorithm),
        ("topology", config.topology),
        ("nodes", config.nodes),
        ("loss", config.loss),
        ("eta", config.eta),
        ("T", config.T),
        ("seed", config.seed),
        ("K_policy", config.k_policy),
        ("mirror", config.mirror),
        ("feasible", config.feasible),
        ("dim", config.dim),
        ("lambda", config.lam),
        ("drift", config.drift),
        ("batch", config.batch),
        ("reg_lambda", config.reg_lambda),
        ("dataset", config.dataset),
        ("partition", config.partition),
        ("target_class", config.target_class),
        ("diagnostics", "on" if config.diagnostics else "off"),
        ("entropy_eps", config.entropy_eps),
        ("lazy_alpha", config.lazy_alpha),
        ("init", config.init),
        ("threads", os.environ.get("DOMD_THREADS", "0")),
    ]
    realized_keys = [
        (key, header[key])
        for key in (
            "lambda", "beta", "G", "R", "mu", "mu_prime", "rho",
            "initial_gap", "gradient_scale", "assumption1_strong_convexity",
            "regret_comparison_series", "drift_clamped_rounds",
        )
    ]

    lines: list[str] = []
    for key, value in echo_keys:
        lines.append(f"# {key} = {_fmt(value)}")
    for key, value in realized_keys:
        lines.append(f"# realized_{key} = {_fmt(value)}")
    lines.append(",".join(CSV_COLUMNS))
    for trace in traces:
        row = [
            str(trace.t),
            str(trace.K),
            _fmt(trace.sigma2),
            _fmt(trace.global_loss_y),
            _fmt(trace.global_loss_x),
        ]
        diag = trace.diagnostics
        if diag is None:
            row.extend([""] * 8)
        else:
            row.extend(
                _fmt(v)
                for v in (
                    diag.cumulative_regret_y,
                    diag.cumulative_regret_x,
                    diag.path_length_so_far,
                    diag.max_disagreement,
                    diag.delta_norm,
                    diag.delta_small_norm,
                    diag.lemma1_slack,
                    diag.xbar_to_opt,
                )
            )
        lines.append(",".join(row))

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"{config.run_name}.csv"
    # temp-then-rename keeps failed runs from leaving partial traces behind
    fd, tmp_name = tempfile.mkstemp(dir=out_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp_name, out_path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return out_path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="domd", description="Distributed online mirror descent simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment from a config file")
    run_p.add_argument("--config", required=True, help="path to key = value config file")
    run_p.add_argument("--out", default=None, help="output directory override")
    run_p.add_argument("--seed", type=int, default=None, help="seed override")
    run_p.add_argument(
        "--algo", choices=sorted(_ALGO_ALIASES), default=None, help="algorithm override"
    )
    args = parser.parse_args(argv)

    try:
        config = parse_config(args.config)
        if args.out is not None:
            config.out_dir = args.out
        if args.seed is not None:
            config.seed = args.seed
        if args.algo is not None:
            config.algorithm = _ALGO_ALIASES[args.algo]
        out_path = execute(config)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
