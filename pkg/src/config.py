"""
Run configuration: JSON file plus command-line overrides, with every scalar
tunable declared in a ConfigSpace configuration space.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
import json
from pathlib import Path
from typing import List, Optional

from ConfigSpace import Configuration, ConfigurationSpace
from ConfigSpace.hyperparameters import CategoricalHyperparameter
from ConfigSpace.hyperparameters import UniformFloatHyperparameter
from ConfigSpace.hyperparameters import UniformIntegerHyperparameter

from agent import METHODS
from controller import ControlParams
from memory import BankParams
from perception import NoiseModel, ScoreWeights
import scenarios
from sim import SimParams


class ConfigError(Exception):
    pass


def get_int(name, lower, upper, *, default, log=False):
    return UniformIntegerHyperparameter(name, lower=lower, upper=upper, default_value=default, log=log)


def get_float(name, lower, upper, *, default, log=False):
    return UniformFloatHyperparameter(name, lower=lower, upper=upper, default_value=default, log=log)


def get_enum(name, choices, default_value=None):
    if default_value is None:
        default_value = choices[0]
    return CategoricalHyperparameter(name, choices, default_value=default_value)


CONTROL_DEFAULTS = ControlParams()
BANK_DEFAULTS = BankParams()
NOISE_DEFAULTS = NoiseModel()
WEIGHT_DEFAULTS = ScoreWeights()
SIM_DEFAULTS = SimParams()

HYPERPARAMETERS = [
    get_float("control.eps_x_in", 0.001, 0.5, default=CONTROL_DEFAULTS.eps_x_in),
    get_float("control.eps_x_out", 0.001, 0.5, default=CONTROL_DEFAULTS.eps_x_out),
    get_float("control.eps_y_in", 0.001, 0.5, default=CONTROL_DEFAULTS.eps_y_in),
    get_float("control.eps_y_out", 0.001, 0.5, default=CONTROL_DEFAULTS.eps_y_out),
    get_float("control.k", 0.1, 100.0, default=CONTROL_DEFAULTS.k),
    get_int("control.n_max", 1, 36, default=CONTROL_DEFAULTS.n_max),
    get_int("control.min_taps", 0, 36, default=CONTROL_DEFAULTS.min_taps),
    get_int("control.tau_on", 1, 100, default=CONTROL_DEFAULTS.tau_on),
    get_int("control.delta", 1, 100, default=CONTROL_DEFAULTS.delta),
    get_int("control.t_stag", 1, 1000, default=CONTROL_DEFAULTS.t_stag),
    get_float("control.ssim_stag", 0.0, 1.0, default=CONTROL_DEFAULTS.ssim_stag),
    get_float("control.flow_stag", 0.0, 100.0, default=CONTROL_DEFAULTS.flow_stag),
    get_int("control.mstp_lost_limit", 1, 1000, default=CONTROL_DEFAULTS.mstp_lost_limit),
    get_int("control.loop_revisits", 1, 100, default=CONTROL_DEFAULTS.loop_revisits),
    get_int("control.stable_frames", 1, 100, default=CONTROL_DEFAULTS.stable_frames),
    get_float("control.stable_iou", 0.0, 1.0, default=CONTROL_DEFAULTS.stable_iou),
    get_int("control.ring_size", 2, 1000, default=CONTROL_DEFAULTS.ring_size),
    get_int("control.scan_taps", 1, 36, default=CONTROL_DEFAULTS.scan_taps),
    get_int("control.recover_pause", 0, 100, default=CONTROL_DEFAULTS.recover_pause),
    get_int("control.recover_pulses", 0, 100, default=CONTROL_DEFAULTS.recover_pulses),
    get_float("control.escape_min_deg", 1.0, 360.0, default=CONTROL_DEFAULTS.escape_min_deg),
    get_float("control.escape_max_deg", 1.0, 360.0, default=CONTROL_DEFAULTS.escape_max_deg),
    get_int("control.escape_burst", 0, 1000, default=CONTROL_DEFAULTS.escape_burst),
    get_int("control.anchor_hamming", 0, 64, default=CONTROL_DEFAULTS.anchor_hamming),
    get_int("control.anchor_period", 1, 10000, default=CONTROL_DEFAULTS.anchor_period),
    get_int("control.anchor_min_gap", 0, 10000, default=CONTROL_DEFAULTS.anchor_min_gap),
    get_int("bank.insert_period", 1, 10000, default=BANK_DEFAULTS.insert_period),
    get_int("bank.delta_h", 1, 64, default=BANK_DEFAULTS.delta_h),
    get_float("bank.delta_z", 0.001, 0.999, default=BANK_DEFAULTS.delta_z),
    get_int("bank.t_quar", 1, 100000, default=BANK_DEFAULTS.t_quar),
    get_int("bank.t_eval", 1, 100000, default=BANK_DEFAULTS.t_eval),
    get_float("bank.tau_iou", 0.001, 1.0, default=BANK_DEFAULTS.tau_iou),
    get_float("bank.lam", 0.001, 100.0, default=BANK_DEFAULTS.lam),
    get_int("bank.knn_k", 1, 10000, default=BANK_DEFAULTS.knn_k),
    get_float("bank.sector_kernel_width", 0.01, 100.0, default=BANK_DEFAULTS.sector_kernel_width),
    get_float("bank.time_decay_halflife", 1.0, 1e7, default=BANK_DEFAULTS.time_decay_halflife),
    get_int("bank.assoc_window", 1, 100000, default=BANK_DEFAULTS.assoc_window),
    get_int("bank.capacity", 1, 1000000, default=BANK_DEFAULTS.capacity),
    get_float("noise.miss_prob", 0.0, 1.0, default=NOISE_DEFAULTS.miss_prob),
    get_float("noise.jitter_px", 0.0, 1000.0, default=NOISE_DEFAULTS.jitter_px),
    get_float("noise.decoy_rate", 0.0, 100.0, default=NOISE_DEFAULTS.decoy_rate),
    get_float("noise.dark_miss_boost", 0.0, 1.0, default=NOISE_DEFAULTS.dark_miss_boost),
    get_int("noise.seed", 0, 2 ** 31 - 1, default=NOISE_DEFAULTS.seed),
    get_float("weights.alpha", 0.0, 100.0, default=WEIGHT_DEFAULTS.alpha),
    get_float("weights.beta", 0.0, 100.0, default=WEIGHT_DEFAULTS.beta),
    get_float("weights.gamma", 0.0, 100.0, default=WEIGHT_DEFAULTS.gamma),
    get_float("weights.w_free", 0.0, 100.0, default=WEIGHT_DEFAULTS.w_free),
    get_float("sim.yaw_per_tap", 0.1, 90.0, default=SIM_DEFAULTS.yaw_per_tap),
    get_float("sim.pitch_per_tap", 0.1, 45.0, default=SIM_DEFAULTS.pitch_per_tap),
    get_float("sim.speed", 0.001, 2.0, default=SIM_DEFAULTS.speed),
    get_float("sim.avatar_radius", 0.01, 2.0, default=SIM_DEFAULTS.avatar_radius),
    get_float("sim.fov", 10.0, 179.0, default=SIM_DEFAULTS.fov),
    get_int("sim.width", 16, 4096, default=SIM_DEFAULTS.width),
    get_int("sim.height", 16, 4096, default=SIM_DEFAULTS.height),
    get_int("sim.ticks_per_decision", 1, 100, default=SIM_DEFAULTS.ticks_per_decision),
    get_int("sim.t_pulse", 1, 100, default=SIM_DEFAULTS.t_pulse),
    get_int("sim.t_gap", 1, 100, default=SIM_DEFAULTS.t_gap),
    get_float("sim.falloff", 0.001, 10.0, default=SIM_DEFAULTS.falloff),
    get_float("sim.dark_factor", 0.001, 1.0, default=SIM_DEFAULTS.dark_factor),
    get_int("sim.occlusion_samples", 1, 10000, default=SIM_DEFAULTS.occlusion_samples),
]
VECTOR_FIELDS = {"noise": ["sector_bias"], "weights": ["sector_prior"]}
SECTIONS = {"control": ControlParams, "bank": BankParams, "noise": NoiseModel,
            "weights": ScoreWeights, "sim": SimParams}


def get_config_space() -> ConfigurationSpace:
    cs = ConfigurationSpace()
    cs.add_hyperparameters(HYPERPARAMETERS)
    cs.add_hyperparameter(get_enum("method", METHODS, default_value="FULL"))
    return cs


@dataclass
class RunConfig:
    scenario: str
    world_seed: int = 0
    seeds: List[int] = field(default_factory=lambda: [0])
    methods: List[str] = field(default_factory=lambda: ["FULL"])
    budget_ticks: int = 5400
    check_period: int = 10
    ncc_threshold: float = 0.80
    carry_memory: bool = False
    world_file: Optional[str] = None
    library: Optional[str] = None
    control: ControlParams = ControlParams()
    bank: BankParams = BankParams()
    noise: NoiseModel = NoiseModel()
    weights: ScoreWeights = ScoreWeights()
    sim: SimParams = SimParams()

    def to_dict(self):
        data = asdict(self)
        for section in SECTIONS:
            data[section] = {k: list(v) if isinstance(v, tuple) else v
                             for k, v in data[section].items()}
        return data


def _validate_scalars(values: dict, methods):
    cs = get_config_space()
    names = set(cs.get_hyperparameter_names())
    flat = {}
    for hp in cs.get_hyperparameters():
        flat[hp.name] = hp.default_value
    for name, value in values.items():
        if name not in names:
            raise ConfigError(f"unknown setting {name!r}")
        hp = cs.get_hyperparameter(name)
        if isinstance(value, bool):
            raise ConfigError(f"{name} must be numeric, got {value!r}")
        try:
            flat[name] = int(value) if isinstance(hp, UniformIntegerHyperparameter) else float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name} must be numeric, got {value!r}") from None
        if isinstance(hp, UniformIntegerHyperparameter) and flat[name] != value:
            raise ConfigError(f"{name} must be an integer, got {value!r}")
    for method in methods:
        try:
            Configuration(cs, values=dict(flat, method=method))
        except ValueError as err:
            raise ConfigError(f"invalid configuration: {err}") from None
    return flat


def _build_section(section, flat, raw):
    cls = SECTIONS[section]
    prefix = section + "."
    kwargs = {name[len(prefix):]: value for name, value in flat.items() if name.startswith(prefix)}
    for name in VECTOR_FIELDS.get(section, []):
        if name in raw:
            vector = raw[name]
            if not isinstance(vector, list) or not all(isinstance(v, (int, float)) for v in vector):
                raise ConfigError(f"{section}.{name} must be a list of numbers")
            kwargs[name] = tuple(float(v) for v in vector)
    return cls(**kwargs)


def build_config(data: dict, overrides: Optional[dict] = None) -> RunConfig:
    data = dict(data)
    overrides = overrides or {}
    for key, value in overrides.items():
        if value is not None:
            data[key] = value

    known = {f.name for f in fields(RunConfig)} | {"runs"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "scenario" not in data:
        raise ConfigError("config needs a 'scenario'")
    if data["scenario"] not in scenarios.get_scenarios() and not data.get("world_file"):
        raise ConfigError(f"unknown scenario {data['scenario']!r}")

    methods = data.get("methods", ["FULL"])
    if isinstance(methods, str):
        methods = [methods]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ConfigError(f"methods must be chosen from {', '.join(METHODS)}, got {methods}")
    seeds = data.get("seeds")
    if seeds is None:
        seeds = list(range(int(data.get("runs", 1))))
    if isinstance(seeds, int):
        seeds = [seeds]

    scalars = {}
    for section in SECTIONS:
        section_data = data.get(section, {})
        if not isinstance(section_data, dict):
            raise ConfigError(f"{section} must be a mapping")
        for name, value in section_data.items():
            if name in VECTOR_FIELDS.get(section, []):
                continue
            scalars[f"{section}.{name}"] = value
    flat = _validate_scalars(scalars, methods)

    try:
        sim = _build_section("sim", flat, data.get("sim", {}))
        control = _build_section("control", flat, data.get("control", {}))
        control = replace(control, yaw_per_tap_deg=sim.yaw_per_tap, fov_deg=sim.fov,
                          screen_width=sim.width, screen_height=sim.height)
        noise = _build_section("noise", flat, data.get("noise", {}))
        weights = _build_section("weights", flat, data.get("weights", {}))
        bank = _build_section("bank", flat, data.get("bank", {}))
    except ValueError as err:
        raise ConfigError(str(err)) from None
    if len(noise.sector_bias) != weights.sectors:
        raise ConfigError("noise.sector_bias and weights.sector_prior must have the same length")

    budget = int(data.get("budget_ticks", 5400))
    if budget < 0 or budget % sim.ticks_per_decision:
        raise ConfigError(f"budget_ticks must be a nonnegative multiple of {sim.ticks_per_decision}")
    check_period = int(data.get("check_period", 10))
    if check_period < 1:
        raise ConfigError("check_period must be at least 1")

    return RunConfig(
        scenario=data["scenario"],
        world_seed=int(data.get("world_seed", 0)),
        seeds=[int(s) for s in seeds],
        methods=list(methods),
        budget_ticks=budget,
        check_period=check_period,
        ncc_threshold=float(data.get("ncc_threshold", 0.80)),
        carry_memory=bool(data.get("carry_memory", False)),
        world_file=data.get("world_file"),
        library=data.get("library"),
        control=control,
        bank=bank,
        noise=noise,
        weights=weights,
        sim=sim,
    )


def load_config(path, overrides: Optional[dict] = None) -> RunConfig:
    try:
        with open(Path(path)) as f:
            data = json.load(f)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path} is not valid JSON: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    return build_config(data, overrides)
