"""Declarative scenario configuration: schema, validation, (de)serialization.

Scenario files are JSON. Parsing is strict: unknown keys, bad enum values,
and dangling node references raise ConfigError naming the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict, replace
from importlib import resources
from pathlib import Path

from .errors import ConfigError

INFERENCE_KINDS = ("LS", "SPBP")
ACTIVATION_KINDS = ("ALOHA", "CSMA", "HTNA")
PRIORITIZATION_KINDS = ("UNIFORM", "CPNP")

# Algorithm-combination acronyms: inference-activation-prioritization.
ACRONYMS = {
    "LS-AL-UN": ("LS", "ALOHA", "UNIFORM"),
    "BP-AL-UN": ("SPBP", "ALOHA", "UNIFORM"),
    "BP-CS-UN": ("SPBP", "CSMA", "UNIFORM"),
    "BP-HT-UN": ("SPBP", "HTNA", "UNIFORM"),
    "BP-HT-CP": ("SPBP", "HTNA", "CPNP"),
}


@dataclass(frozen=True)
class AnchorSpec:
    id: int
    position: tuple
    label: str | None = None


@dataclass(frozen=True)
class Waypoint:
    position: tuple
    arrival_s: float
    dwell_s: float = 0.0


@dataclass(frozen=True)
class AgentSpec:
    id: int
    initial_position: tuple
    initial_velocity: tuple = (0.0, 0.0, 0.0)
    trajectory: tuple = ()  # Waypoints; empty means static at initial_position
    belief_mean: tuple | None = None  # 6-vector; None -> initial truth-free default
    pos_sigma: float | None = None
    vel_sigma: float | None = None
    label: str | None = None


@dataclass(frozen=True)
class LinkTruthConfig:
    comm_range_m: float = 60.0
    nlos_pairs: tuple = ()  # pairs of node ids
    blocked_pairs: tuple = ()  # pairs that can never communicate
    nlos_cross_z: float | None = None  # links crossing this z plane are NLOS


@dataclass(frozen=True)
class Algorithms:
    inference: str = "SPBP"
    activation: str = "ALOHA"
    prioritization: str = "UNIFORM"


@dataclass(frozen=True)
class Parameters:
    # motion / belief
    sigma_x2: float = 0.06**2
    sigma_y2: float = 0.06**2
    sigma_z2: float = 0.02**2
    pos_sigma: float = 3.0
    vel_sigma: float = 1.0
    # coarse deployment-area prior: centered in the room, near walking height
    default_belief_mean: tuple = (6.0, 4.0, 1.5, 0.0, 0.0, 0.0)
    # measurement allocation
    m_per_neighbor: int = 4
    budget: int = 12
    allow_agent_measurements: bool = True
    # epochs
    epoch_period_s: float = 0.1
    epoch_jitter: float = 0.1
    # channel / protocol timing
    t_m_s: float = 0.002  # airtime equivalent of one full measurement
    msg_air_s: float = 0.0004
    turnaround_s: float = 0.0001
    exchange_gap_s: float = 0.0001
    ranging_timeout_s: float = 0.01
    chirp_mean_interval_s: float = 1.0
    chirp_air_s: float = 0.0002
    neighbor_expiry_s: float = 5.0
    # radio error model
    los_sigma_m: float = 0.10
    nlos_bias_mean_m: float = 0.6
    erc_noise_sigma: float = 0.1
    clock_drift_ppm: float = 20.0
    clock_offset_max_s: float = 0.01
    # policies
    aloha_mean_delay_s: float = 0.02
    csma_sense_s: float = 0.0005
    csma_backoff_base_s: float = 0.001
    csma_max_attempts: int = 6
    htna_window_lo: float = 0.5
    htna_window_hi: float = 2.0
    # metrics
    metrics_burn_in_s: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    duration_s: float
    seed: int = 0
    anchors: tuple = ()
    agents: tuple = ()
    link_truth: LinkTruthConfig = field(default_factory=LinkTruthConfig)
    algorithms: Algorithms = field(default_factory=Algorithms)
    parameters: Parameters = field(default_factory=Parameters)

    def node_ids(self) -> list[int]:
        return [a.id for a in self.anchors] + [a.id for a in self.agents]

    def with_algorithms(self, acronym: str) -> "ScenarioConfig":
        if acronym not in ACRONYMS:
            raise ConfigError(f"unknown algorithm acronym {acronym!r}")
        inf, act, pri = ACRONYMS[acronym]
        return replace(
            self,
            algorithms=Algorithms(inference=inf, activation=act, prioritization=pri),
        )


def _require_keys(d: dict, allowed: set, where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def _vec(v, n, where) -> tuple:
    try:
        out = tuple(float(x) for x in v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a numeric {n}-vector") from None
    if len(out) != n:
        raise ConfigError(f"{where} must have {n} components, got {len(out)}")
    return out


def _pairs(v, where) -> tuple:
    out = []
    for i, pair in enumerate(v):
        if len(pair) != 2:
            raise ConfigError(f"{where}[{i}] must be a pair of node ids")
        out.append((int(pair[0]), int(pair[1])))
    return tuple(out)


def _parse_anchor(d: dict, idx: int) -> AnchorSpec:
    where = f"anchors[{idx}]"
    _require_keys(d, {"id", "position", "label"}, where)
    if "id" not in d or "position" not in d:
        raise ConfigError(f"{where} requires 'id' and 'position'")
    return AnchorSpec(int(d["id"]), _vec(d["position"], 3, f"{where}.position"), d.get("label"))


def _parse_waypoint(d: dict, where: str) -> Waypoint:
    _require_keys(d, {"position", "arrival_s", "dwell_s"}, where)
    if "position" not in d or "arrival_s" not in d:
        raise ConfigError(f"{where} requires 'position' and 'arrival_s'")
    return Waypoint(
        _vec(d["position"], 3, f"{where}.position"),
        float(d["arrival_s"]),
        float(d.get("dwell_s", 0.0)),
    )


def _parse_agent(d: dict, idx: int) -> AgentSpec:
    where = f"agents[{idx}]"
    _require_keys(
        d,
        {"id", "initial_position", "initial_velocity", "trajectory",
         "belief_mean", "pos_sigma", "vel_sigma", "label"},
        where,
    )
    if "id" not in d or "initial_position" not in d:
        raise ConfigError(f"{where} requires 'id' and 'initial_position'")
    traj = tuple(
        _parse_waypoint(w, f"{where}.trajectory[{i}]")
        for i, w in enumerate(d.get("trajectory", []))
    )
    times = [w.arrival_s for w in traj]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigError(f"{where}.trajectory arrival times must be strictly increasing")
    belief_mean = d.get("belief_mean")
    return AgentSpec(
        id=int(d["id"]),
        initial_position=_vec(d["initial_position"], 3, f"{where}.initial_position"),
        initial_velocity=_vec(
            d.get("initial_velocity", (0, 0, 0)), 3, f"{where}.initial_velocity"
        ),
        trajectory=traj,
        belief_mean=None if belief_mean is None else _vec(belief_mean, 6, f"{where}.belief_mean"),
        pos_sigma=None if d.get("pos_sigma") is None else float(d["pos_sigma"]),
        vel_sigma=None if d.get("vel_sigma") is None else float(d["vel_sigma"]),
        label=d.get("label"),
    )


def _parse_enum(value, allowed, where) -> str:
    if value not in allowed:
        raise ConfigError(f"{where} must be one of {list(allowed)}, got {value!r}")
    return value


def scenario_from_dict(d: dict) -> ScenarioConfig:
    _require_keys(
        d,
        {"name", "duration_s", "seed", "anchors", "agents", "link_truth",
         "algorithms", "parameters"},
        "scenario",
    )
    if "name" not in d or "duration_s" not in d:
        raise ConfigError("scenario requires 'name' and 'duration_s'")
    duration = float(d["duration_s"])
    if duration < 0:
        raise ConfigError("duration_s must be >= 0")
    anchors = tuple(_parse_anchor(a, i) for i, a in enumerate(d.get("anchors", [])))
    agents = tuple(_parse_agent(a, i) for i, a in enumerate(d.get("agents", [])))
    ids = [a.id for a in anchors] + [a.id for a in agents]
    if len(set(ids)) != len(ids):
        raise ConfigError("node ids must be unique across anchors and agents")

    lt = d.get("link_truth", {})
    _require_keys(
        lt, {"comm_range_m", "nlos_pairs", "blocked_pairs", "nlos_cross_z"}, "link_truth"
    )
    link_truth = LinkTruthConfig(
        comm_range_m=float(lt.get("comm_range_m", 60.0)),
        nlos_pairs=_pairs(lt.get("nlos_pairs", []), "link_truth.nlos_pairs"),
        blocked_pairs=_pairs(lt.get("blocked_pairs", []), "link_truth.blocked_pairs"),
        nlos_cross_z=None if lt.get("nlos_cross_z") is None else float(lt["nlos_cross_z"]),
    )
    known = set(ids)
    for label, pairs in (
        ("nlos_pairs", link_truth.nlos_pairs),
        ("blocked_pairs", link_truth.blocked_pairs),
    ):
        for pair in pairs:
            for nid in pair:
                if nid not in known:
                    raise ConfigError(f"link_truth.{label} references unknown node id {nid}")

    alg = d.get("algorithms", {})
    _require_keys(alg, {"inference", "activation", "prioritization"}, "algorithms")
    algorithms = Algorithms(
        inference=_parse_enum(alg.get("inference", "SPBP"), INFERENCE_KINDS, "algorithms.inference"),
        activation=_parse_enum(
            alg.get("activation", "ALOHA"), ACTIVATION_KINDS, "algorithms.activation"
        ),
        prioritization=_parse_enum(
            alg.get("prioritization", "UNIFORM"), PRIORITIZATION_KINDS,
            "algorithms.prioritization",
        ),
    )

    par = d.get("parameters", {})
    par_fields = {f for f in Parameters.__dataclass_fields__}
    _require_keys(par, par_fields, "parameters")
    kwargs = {}
    for key, value in par.items():
        default = getattr(Parameters(), key)
        if isinstance(default, bool):
            kwargs[key] = bool(value)
        elif isinstance(default, int):
            kwargs[key] = int(value)
        elif isinstance(default, tuple):
            kwargs[key] = _vec(value, len(default), f"parameters.{key}")
        else:
            kwargs[key] = float(value)
    parameters = Parameters(**kwargs)

    return ScenarioConfig(
        name=str(d["name"]),
        duration_s=duration,
        seed=int(d.get("seed", 0)),
        anchors=anchors,
        agents=agents,
        link_truth=link_truth,
        algorithms=algorithms,
        parameters=parameters,
    )


def scenario_to_dict(s: ScenarioConfig) -> dict:
    d = asdict(s)
    # asdict turns nested dataclasses into dicts already; normalize tuples.
    return json.loads(json.dumps(d))


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scenario file not found: {path}")
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return scenario_from_dict(raw)


def save_scenario(s: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2, sort_keys=True)
        fh.write("\n")


def bundled_scenario_path(name: str) -> Path:
    """Path to a scenario shipped with the package (name without extension)."""
    ref = resources.files("coopnav.scenarios") / f"{name}.json"
    if not ref.is_file():
        raise ConfigError(f"no bundled scenario named {name!r}")
    return Path(str(ref))
