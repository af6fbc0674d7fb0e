"""Run orchestration: configuration, learning-rate schedules, hypothesis
validation, the training loop, and per-step telemetry.

A run is described by a flat sectioned config (``[problem]``, ``[topology]``,
``[optim]``, ``[schedule]``, ``[run]``) loaded into a :class:`RunConfig`.
The loop samples per-worker gradients (deterministically keyed by
(worker, step)), applies the configured step rule, mixes, and records
metrics evaluated at the averaged model.  Worker-local gradient sampling may
run on a thread pool; every aggregation point is a barrier and arithmetic
order never depends on the thread count, so metrics are byte-identical for
any ``threads`` setting.

Divergence aborts: any non-finite worker state raises
:class:`NumericalDivergence` (the CLI maps it to exit code 2) rather than
being clamped — blowing up is signal in an optimizer test bed.
"""

from __future__ import annotations

import configparser
import dataclasses
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .consensus import consensus_distance
from .oracles import ProblemSpec, quadratic_family
from .optim import (
    HyperParams,
    WorkerState,
    decentralized_step,
    d2_step,
    dmsgd_step,
    gt_init,
    gt_step,
    init_worker_states,
    mimelite_round,
    qg_dadam_step,
    qhm_step,
    slowmo_round,
)
from .topology import build_graph, mixing_matrix, one_peer_exponential_matrix

__all__ = [
    "ConfigError",
    "MetricsRecord",
    "NumericalDivergence",
    "OPTIM_KINDS",
    "RunConfig",
    "RunResult",
    "ScheduleSpec",
    "TheoremReport",
    "heading_change_sum",
    "lr_schedule",
    "metrics_csv_lines",
    "run",
    "validate_theorem_conditions",
    "write_metrics_csv",
]

METRICS_HEADER = "step,epoch,lr,loss,grad_norm,consensus_dist,weight_norm,eff_stepsize"

OPTIM_KINDS = (
    "dsgd", "dsgdm", "dsgdm_n", "qg_dsgdm", "qg_dsgdm_n", "qg_dadam",
    "dmsgd_i", "dmsgd_ii", "d2", "d2_plus", "gt", "gt_momentum",
    "slowmo", "mimelite", "qhm",
)

# kinds whose step consumes a pre-sampled per-worker gradient list; the
# remaining kinds sample internally (tracking) or run whole rounds
_FLAT_KINDS = ("dsgd", "dsgdm", "dsgdm_n", "qg_dsgdm", "qg_dsgdm_n",
               "qg_dadam", "dmsgd_i", "dmsgd_ii", "d2", "d2_plus", "qhm")

_PROBLEM_ALIASES = {
    "quadratic": "quadratic_family",
    "quadratic_family": "quadratic_family",
    "toy2d": "toy2d_hetero",
    "toy2d_hetero": "toy2d_hetero",
    "rosenbrock": "rosenbrock",
    "nonconvex_toy": "nonconvex_toy",
}


class ConfigError(Exception):
    """Invalid or missing configuration; the CLI exits 1 on this."""


class NumericalDivergence(Exception):
    """A worker state went non-finite; the CLI exits 2 on this."""

    def __init__(self, step: int, method: str):
        self.step = step
        self.method = method
        super().__init__(
            f"non-finite worker state at step {step} (method {method}); aborting")


# ---------------------------------------------------------------------------
# learning-rate schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScheduleSpec:
    """Constant step size, or linear warmup followed by stage-wise decay.

    ``warmup_stage`` ramps linearly from ``warmup_start_factor * base_eta``
    to ``base_eta`` over the first ``warmup_fraction`` of training, then
    divides by ``decay_factor`` at each milestone fraction reached.
    """

    kind: str = "constant"
    base_eta: float = 0.1
    warmup_fraction: float = 0.0
    warmup_start_factor: float = 0.1
    milestones: tuple[float, ...] = ()
    decay_factor: float = 10.0

    def __post_init__(self):
        if self.kind not in ("constant", "warmup_stage"):
            raise ConfigError(
                f"schedule kind must be 'constant' or 'warmup_stage'; got {self.kind!r}")
        if not self.base_eta > 0:
            raise ConfigError(f"base_eta must be > 0; got {self.base_eta}")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError(
                f"warmup_fraction must lie in [0, 1); got {self.warmup_fraction}")
        if not 0.0 < self.warmup_start_factor <= 1.0:
            raise ConfigError(
                f"warmup_start_factor must lie in (0, 1]; got {self.warmup_start_factor}")
        ms = tuple(float(m) for m in self.milestones)
        if any(not 0.0 < m < 1.0 for m in ms) or any(
                b <= a for a, b in zip(ms, ms[1:])):
            raise ConfigError(
                f"milestones must be strictly increasing fractions in (0, 1); got {ms}")
        if not self.decay_factor > 0:
            raise ConfigError(f"decay_factor must be > 0; got {self.decay_factor}")
        object.__setattr__(self, "milestones", ms)


def lr_schedule(spec: ScheduleSpec, step: int, total_steps: int) -> float:
    """Step size at 1-based ``step`` out of ``total_steps``."""
    if total_steps < 1:
        raise ConfigError(f"total_steps must be >= 1; got {total_steps}")
    if spec.kind == "constant":
        return spec.base_eta
    progress = step / total_steps
    base = spec.base_eta
    if spec.warmup_fraction > 0.0 and progress < spec.warmup_fraction:
        start = min(spec.warmup_start_factor * base, base)
        return start + (base - start) * (progress / spec.warmup_fraction)
    passed = sum(1 for m in spec.milestones if progress >= m)
    return base / spec.decay_factor**passed


# ---------------------------------------------------------------------------
# hypothesis validation (informational only)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TheoremReport:
    """Convergence-guarantee precondition check; advisory, never fatal.

    ``momentum_ok`` states whether beta/(1-beta) <= rho/21 (with a 1e-12
    absolute slack so parameters placed exactly on the bound validate);
    the guarantee's step-size scale sqrt(n / (sigma^2 T)) is included when
    enough run constants are known.
    """

    momentum_ratio: float
    bound: float
    momentum_ok: bool
    suggested_eta: float | None
    message: str


def validate_theorem_conditions(
    hp: HyperParams,
    rho: float,
    n_workers: int | None = None,
    sigma_sq: float | None = None,
    total_steps: int | None = None,
) -> TheoremReport:
    """Check the momentum bound beta/(1-beta) <= rho/21 and suggest the
    guarantee's step-size scale.  The report never blocks a run: the bound
    is known to be far more conservative than practice requires."""
    ratio = hp.beta / (1.0 - hp.beta)
    bound = rho / 21.0
    ok = ratio <= bound + 1e-12
    suggested = None
    if n_workers and sigma_sq and total_steps and sigma_sq > 0:
        suggested = float(np.sqrt(n_workers / (sigma_sq * total_steps)))
    if ok:
        message = (f"momentum bound satisfied: beta/(1-beta) = {ratio:.6g} "
                   f"<= rho/21 = {bound:.6g}")
    else:
        message = (f"momentum bound violated: beta/(1-beta) = {ratio:.6g} "
                   f"> rho/21 = {bound:.6g}; the guarantee does not apply, "
                   "though the method typically still works")
    if suggested is not None:
        message += f"; suggested step-size scale sqrt(n/(sigma^2 T)) = {suggested:.6g}"
    return TheoremReport(momentum_ratio=ratio, bound=bound, momentum_ok=ok,
                         suggested_eta=suggested, message=message)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

# section -> key -> (parser, default); None default marks a required key
_SCHEMA = {
    "problem": {
        "kind": (str, "quadratic"),
        "dim": (int, 16),
        "zeta": (float, 0.0),
        "sigma": (float, 0.0),
        "cond": (float, 1.0),
        "b_scale": (float, 1.0),
        "scale": (float, 1.0),
        "init": (str, "0.0"),
    },
    "topology": {
        "kind": (str, "ring"),
        "n": (int, 4),
        "scheme": (str, "metropolis_hastings"),
        "rows": (str, ""),
    },
    "optim": {
        "kind": (str, None),
        "eta": (float, 0.1),
        "beta": (float, 0.9),
        "mu": (str, ""),
        "beta1": (float, 0.9),
        "beta2": (float, 0.99),
        "epsilon": (float, 1e-8),
        "tau": (int, 1),
        "slowmo_alpha": (float, 1.0),
        "slowmo_beta": (float, 0.7),
        "slowmo_base": (str, "dsgdm"),
    },
    "schedule": {
        "kind": (str, "constant"),
        "warmup_fraction": (float, 0.05),
        "warmup_start_factor": (float, 0.1),
        "milestones": (str, "0.5,0.75"),
        "decay_factor": (float, 10.0),
    },
    "run": {
        "steps": (int, 100),
        "seed": (int, 0),
        "steps_per_epoch": (int, 50),
        "metrics_every": (int, 1),
        "threads": (int, 1),
    },
}


def _parse_value(section: str, key: str, raw: str):
    parser, _default = _SCHEMA[section][key]
    try:
        return parser(raw)
    except ValueError:
        raise ConfigError(
            f"{section}.{key}: cannot parse {raw!r} as {parser.__name__}") from None


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run description; see ``_SCHEMA`` for keys/defaults."""

    problem_kind: str
    dim: int
    zeta: float
    sigma: float
    cond: float
    b_scale: float
    scale: float
    init: str
    topology_kind: str
    n: int
    scheme: str
    rows: int | None
    optim_kind: str
    eta: float
    beta: float
    mu: float | None
    beta1: float
    beta2: float
    epsilon: float
    tau: int
    slowmo_alpha: float
    slowmo_beta: float
    slowmo_base: str
    schedule_kind: str
    warmup_fraction: float
    warmup_start_factor: float
    milestones: tuple[float, ...]
    decay_factor: float
    steps: int
    seed: int
    steps_per_epoch: int
    metrics_every: int
    threads: int

    @staticmethod
    def from_mapping(mapping: dict, overrides: dict | None = None) -> "RunConfig":
        """Build from {section: {key: str-or-value}} plus dotted overrides.

        Unknown sections/keys are rejected by name; ``optim.kind`` is the
        one required field.
        """
        values: dict[str, dict] = {s: {} for s in _SCHEMA}
        for section, entries in mapping.items():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in dict(entries).items():
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                values[section][key] = (
                    _parse_value(section, key, raw) if isinstance(raw, str)
                    else raw)
        for dotted, raw in (overrides or {}).items():
            if "." not in dotted:
                raise ConfigError(
                    f"override {dotted!r} must use section.key form")
            section, key = dotted.split(".", 1)
            if section not in _SCHEMA or key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            values[section][key] = (
                _parse_value(section, key, raw) if isinstance(raw, str) else raw)
        for section, keys in _SCHEMA.items():
            for key, (_parser, default) in keys.items():
                if key not in values[section]:
                    if default is None:
                        raise ConfigError(f"missing required field {section}.{key}")
                    values[section][key] = default

        p, t, o, s, r = (values["problem"], values["topology"], values["optim"],
                         values["schedule"], values["run"])

        def _optional(section, key, parser):
            raw = str(values[section][key]).strip()
            if not raw:
                return None
            try:
                return parser(raw)
            except ValueError:
                raise ConfigError(
                    f"{section}.{key}: cannot parse {raw!r} as {parser.__name__}"
                ) from None

        cfg = RunConfig(
            problem_kind=p["kind"], dim=p["dim"], zeta=p["zeta"], sigma=p["sigma"],
            cond=p["cond"], b_scale=p["b_scale"], scale=p["scale"],
            init=str(p["init"]),
            topology_kind=t["kind"], n=t["n"], scheme=t["scheme"],
            rows=_optional("topology", "rows", int),
            optim_kind=o["kind"], eta=o["eta"], beta=o["beta"],
            mu=_optional("optim", "mu", float),
            beta1=o["beta1"], beta2=o["beta2"], epsilon=o["epsilon"],
            tau=o["tau"], slowmo_alpha=o["slowmo_alpha"],
            slowmo_beta=o["slowmo_beta"], slowmo_base=o["slowmo_base"],
            schedule_kind=s["kind"], warmup_fraction=s["warmup_fraction"],
            warmup_start_factor=s["warmup_start_factor"],
            milestones=_parse_milestones(s["milestones"]),
            decay_factor=s["decay_factor"],
            steps=r["steps"], seed=r["seed"], steps_per_epoch=r["steps_per_epoch"],
            metrics_every=r["metrics_every"], threads=r["threads"],
        )
        cfg.validate()
        return cfg

    @staticmethod
    def from_ini(path: str, overrides: dict | None = None) -> "RunConfig":
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path!r}")
        mapping = {section: dict(parser[section]) for section in parser.sections()}
        return RunConfig.from_mapping(mapping, overrides)

    def validate(self):
        if self.problem_kind not in _PROBLEM_ALIASES:
            raise ConfigError(
                f"problem.kind must be one of {sorted(set(_PROBLEM_ALIASES))}; "
                f"got {self.problem_kind!r}")
        if self.optim_kind not in OPTIM_KINDS:
            raise ConfigError(
                f"optim.kind must be one of {OPTIM_KINDS}; got {self.optim_kind!r}")
        if self.slowmo_base not in ("dsgd", "dsgdm", "dsgdm_n", "qg_dsgdm", "qg_dsgdm_n"):
            raise ConfigError(
                f"optim.slowmo_base must be a per-step kind; got {self.slowmo_base!r}")
        for name in ("steps", "steps_per_epoch", "metrics_every", "threads", "n"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1; got {getattr(self, name)}")
        if self.optim_kind == "qhm" and self.n != 1:
            raise ConfigError("optim.kind qhm is the single-worker closed form; "
                              f"requires topology.n = 1, got {self.n}")
        if self.optim_kind in ("slowmo", "mimelite") and self.steps % self.tau != 0:
            raise ConfigError(
                f"run.steps ({self.steps}) must be a multiple of optim.tau "
                f"({self.tau}) for round-structured methods")
        # constructing these validates their parameter ranges
        self.schedule_spec()
        self.hyper_params()

    def schedule_spec(self) -> ScheduleSpec:
        return ScheduleSpec(
            kind=self.schedule_kind, base_eta=self.eta,
            warmup_fraction=self.warmup_fraction,
            warmup_start_factor=self.warmup_start_factor,
            milestones=self.milestones, decay_factor=self.decay_factor)

    def hyper_params(self) -> HyperParams:
        try:
            return HyperParams(
                eta=self.eta, beta=self.beta, mu=self.mu, beta1=self.beta1,
                beta2=self.beta2, epsilon=self.epsilon, tau=self.tau,
                slowmo_alpha=self.slowmo_alpha, slowmo_beta=self.slowmo_beta)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def _parse_milestones(raw) -> tuple[float, ...]:
    if isinstance(raw, tuple):
        return raw
    text = str(raw).strip()
    if not text:
        return ()
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(
            f"schedule.milestones: cannot parse {raw!r} as comma-separated floats"
        ) from None


# ---------------------------------------------------------------------------
# problem / topology construction
# ---------------------------------------------------------------------------

def build_problem(config: RunConfig) -> ProblemSpec:
    kind = _PROBLEM_ALIASES[config.problem_kind]
    try:
        if kind == "quadratic_family":
            return quadratic_family(
                dim=config.dim, n_workers=config.n, zeta_c=config.zeta,
                sigma_c=config.sigma, cond=config.cond, b_scale=config.b_scale,
                master_seed=config.seed)
        if kind == "toy2d_hetero":
            return ProblemSpec(kind=kind, dim=2, n_workers=config.n,
                               grad_scale=config.scale)
        return ProblemSpec(kind=kind, dim=2, n_workers=config.n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_mixing(config: RunConfig):
    """MixingMatrix for static topologies, or a ``t -> MixingMatrix``
    generator for the time-varying pairing scheme."""
    try:
        if config.topology_kind == "one_peer_exponential":
            build_graph("one_peer_exponential", config.n)  # validates n
            return lambda t: one_peer_exponential_matrix(config.n, t)
        params = {}
        if config.topology_kind == "torus" and config.rows is not None:
            params["rows"] = config.rows
        graph = build_graph(config.topology_kind, config.n, **params)
        return mixing_matrix(graph, scheme=config.scheme)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _initial_point(config: RunConfig, dim: int) -> np.ndarray:
    parts = [p for p in config.init.split(",") if p.strip()]
    try:
        vals = [float(p) for p in parts] if parts else [0.0]
    except ValueError:
        raise ConfigError(
            f"problem.init: cannot parse {config.init!r} as floats") from None
    if len(vals) == 1:
        return np.full(dim, vals[0])
    if len(vals) != dim:
        raise ConfigError(
            f"problem.init has {len(vals)} components but the problem dimension "
            f"is {dim}")
    return np.array(vals)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsRecord:
    """One telemetry row, evaluated at the averaged model."""

    step: int
    epoch: float
    lr: float
    loss: float
    grad_norm: float
    consensus_dist: float
    weight_norm: float
    eff_stepsize: float


def _make_record(problem: ProblemSpec, states, step: int, lr: float,
                 steps_per_epoch: int) -> MetricsRecord:
    X = np.stack([s.x for s in states], axis=1)
    x_bar = X.mean(axis=1)
    weight_norm = float(np.linalg.norm(x_bar))
    eff = lr / weight_norm**2 if weight_norm > 0.0 else float("inf")
    return MetricsRecord(
        step=step,
        epoch=step / steps_per_epoch,
        lr=float(lr),
        loss=problem.mean_loss(x_bar),
        grad_norm=float(np.linalg.norm(problem.mean_gradient(x_bar))),
        consensus_dist=consensus_distance(X),
        weight_norm=weight_norm,
        eff_stepsize=float(eff),
    )


def metrics_csv_lines(records) -> list[str]:
    """Exact CSV serialization: shortest round-trip float representation,
    independent of how the records were computed."""
    lines = [METRICS_HEADER]
    for r in records:
        lines.append(",".join([
            str(r.step),
            repr(float(r.epoch)),
            repr(float(r.lr)),
            repr(float(r.loss)),
            repr(float(r.grad_norm)),
            repr(float(r.consensus_dist)),
            repr(float(r.weight_norm)),
            repr(float(r.eff_stepsize)),
        ]))
    return lines


def write_metrics_csv(records, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(metrics_csv_lines(records)) + "\n")


def heading_change_sum(points) -> float:
    """Oscillation statistic of a 2D trajectory: total absolute turning
    angle between consecutive movement segments.  Straight paths score 0;
    zig-zagging scores ~pi per reversal.

    Segments shorter than 1e-9 times the trajectory's bounding-box diagonal
    are skipped: at that scale a step direction is rounding noise, and a
    converged method sitting at an optimum would otherwise accumulate
    arbitrary turning angle from jitter."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must be (T, 2); got shape {pts.shape}")
    deltas = np.diff(pts, axis=0)
    extent = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    floor = max(1e-15, 1e-9 * extent)
    deltas = deltas[np.linalg.norm(deltas, axis=1) > floor]
    if len(deltas) < 2:
        return 0.0
    headings = np.arctan2(deltas[:, 1], deltas[:, 0])
    turns = np.diff(headings)
    turns = (turns + np.pi) % (2.0 * np.pi) - np.pi
    return float(np.sum(np.abs(turns)))


# ---------------------------------------------------------------------------
# the run loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunResult:
    records: tuple
    final_states: tuple
    xbar_trace: np.ndarray
    problem: ProblemSpec
    theorem_report: TheoremReport | None


def _check_finite(states, step: int, method: str) -> None:
    for s in states:
        for arr in (s.x, s.m_hat, s.m_local, s.v):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise NumericalDivergence(step, method)


def _sampling_point(kind: str, state: WorkerState) -> np.ndarray:
    if kind == "dmsgd_ii" and state.x_half_prev is not None:
        return state.x_half_prev
    return state.x


def run(config: RunConfig) -> RunResult:
    """Execute one configured run; deterministic given the config."""
    problem = build_problem(config)
    mixing = build_mixing(config)
    hp0 = config.hyper_params()
    schedule = config.schedule_spec()
    kind = config.optim_kind
    n = config.n

    report = None
    if not callable(mixing):
        report = validate_theorem_conditions(
            hp0, mixing.rho, n_workers=n,
            sigma_sq=problem.noise_bound if problem.kind == "quadratic_family" else None,
            total_steps=config.steps)
        if not report.momentum_ok:
            warnings.warn(report.message)

    def grad_fn(i, x, t):
        return problem.sample(i, x, t).grad

    x0 = _initial_point(config, problem.dim)
    states = init_worker_states(x0, n)
    if kind in ("gt", "gt_momentum"):
        states = gt_init(states, grad_fn, step=0)

    server_x, server_s = x0.copy(), np.zeros_like(x0)  # mimelite only

    records: list[MetricsRecord] = []
    xbar_trace = [np.mean([s.x for s in states], axis=0)]
    executor = (ThreadPoolExecutor(max_workers=config.threads)
                if config.threads > 1 and kind in _FLAT_KINDS else None)

    def matrix_at(t):
        return mixing(t) if callable(mixing) else mixing

    def sample_grads(t):
        points = [_sampling_point(kind, s) for s in states]
        if executor is not None:
            return list(executor.map(
                lambda i: grad_fn(i, points[i], t), range(n)))
        return [grad_fn(i, points[i], t) for i in range(n)]

    try:
        if kind in ("slowmo", "mimelite"):
            rounds = config.steps // config.tau
            for r in range(rounds):
                step0 = r * config.tau
                step_end = step0 + config.tau
                lr = lr_schedule(schedule, step0 + 1, config.steps)
                hp_r = dataclasses.replace(hp0, eta=lr)
                if kind == "slowmo":
                    states = slowmo_round(states, matrix_at(step0), hp_r,
                                          config.slowmo_base, grad_fn, step0)
                else:
                    server_x, server_s = mimelite_round(
                        server_x, server_s, hp_r, grad_fn,
                        lambda i, x: problem.sample_mean_part(i, x), n, step0)
                    states = [s.replace(x=server_x.copy()) for s in states]
                _check_finite(states, step_end, kind)
                xbar_trace.append(np.mean([s.x for s in states], axis=0))
                if step_end % config.metrics_every == 0 or r == rounds - 1:
                    records.append(_make_record(problem, states, step_end, lr,
                                                config.steps_per_epoch))
        else:
            for t in range(1, config.steps + 1):
                lr = lr_schedule(schedule, t, config.steps)
                hp_t = dataclasses.replace(hp0, eta=lr)
                W_t = matrix_at(t - 1)
                if kind in ("gt", "gt_momentum"):
                    states = gt_step(states, W_t, hp_t, grad_fn, t - 1,
                                     with_momentum=(kind == "gt_momentum"))
                elif kind == "qhm":
                    g = sample_grads(t)[0]
                    states = [qhm_step(states[0], g, hp_t)]
                elif kind in ("dmsgd_i", "dmsgd_ii"):
                    states = dmsgd_step(states, sample_grads(t), W_t, hp_t,
                                        "I" if kind == "dmsgd_i" else "II")
                elif kind in ("d2", "d2_plus"):
                    states = d2_step(states, sample_grads(t), W_t, hp_t, kind)
                elif kind == "qg_dadam":
                    states = qg_dadam_step(states, sample_grads(t), W_t, hp_t)
                else:
                    states = decentralized_step(kind, states, sample_grads(t),
                                                W_t, hp_t, step_index=t)
                _check_finite(states, t, kind)
                xbar_trace.append(np.mean([s.x for s in states], axis=0))
                if t % config.metrics_every == 0 or t == config.steps:
                    records.append(_make_record(problem, states, t, lr,
                                                config.steps_per_epoch))
    finally:
        if executor is not None:
            executor.shutdown(wait=False)

    return RunResult(
        records=tuple(records),
        final_states=tuple(states),
        xbar_trace=np.stack(xbar_trace, axis=0),
        problem=problem,
        theorem_report=report,
    )
