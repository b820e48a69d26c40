"""Run configuration: TOML parsing, schema validation, defaults.

A run file is TOML with a top-level ``kind`` plus optional ``[system]``,
``[decoherence]``, ``[integrator]`` and ``[run]`` tables.  Every key is
schema-checked (unknown keys are rejected with their dotted path) and
bounds-checked before any computation; omitted keys take the bundled
reference defaults.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import asdict, dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import presets
from .dynamics import IntegratorConfig
from .models import DecoherenceSpec, ModelError, RATE_CONVENTIONS

KINDS = ("odro", "chevron", "swap", "cz", "robustness", "dicke",
         "sd-benchmark", "leakage", "ac-stark", "pulse-design", "darkstate")

DESK_SCALE_DEFECTS = 3


class ConfigError(ValueError):
    """Invalid run configuration; the message carries the offending field path."""


# --- schema machinery -------------------------------------------------------

class _Key:
    def __init__(self, typ, default, *, minimum=None, maximum=None, choices=None,
                 exclusive_min=False):
        self.typ = typ
        self.default = default
        self.minimum = minimum
        self.maximum = maximum
        self.choices = choices
        self.exclusive_min = exclusive_min

    def check(self, value, path):
        if self.typ == "number":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{path}: expected a number, got {value!r}")
            value = float(value)
        elif self.typ == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{path}: expected an integer, got {value!r}")
        elif self.typ == "str":
            if not isinstance(value, str):
                raise ConfigError(f"{path}: expected a string, got {value!r}")
        elif self.typ == "bool":
            if not isinstance(value, bool):
                raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        elif self.typ == "list-number":
            if not isinstance(value, list) or not value or any(
                    isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
                raise ConfigError(f"{path}: expected a nonempty list of numbers, got {value!r}")
            value = [float(v) for v in value]
        else:
            raise AssertionError(self.typ)
        if self.choices is not None and value not in self.choices:
            raise ConfigError(f"{path}: must be one of {self.choices}, got {value!r}")
        lo_vals = value if isinstance(value, list) else [value]
        for v in lo_vals:
            if self.minimum is not None:
                if self.exclusive_min and v <= self.minimum:
                    raise ConfigError(f"{path}: must be > {self.minimum}, got {v}")
                if not self.exclusive_min and v < self.minimum:
                    raise ConfigError(f"{path}: must be >= {self.minimum}, got {v}")
            if self.maximum is not None and v > self.maximum:
                raise ConfigError(f"{path}: must be <= {self.maximum}, got {v}")
        return value


def _apply_schema(data, schema, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a table")
    out = {}
    for key, value in data.items():
        here = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"{here}: unknown key")
        entry = schema[key]
        if isinstance(entry, dict):
            out[key] = _apply_schema(value, entry, here)
        else:
            out[key] = entry.check(value, here)
    for key, entry in schema.items():
        if key in out:
            continue
        if isinstance(entry, dict):
            out[key] = _apply_schema({}, entry, f"{path}.{key}" if path else key)
        elif entry.default is not None or entry.typ == "bool":
            out[key] = entry.default
    return out


_SYSTEM_SCHEMA = {
    "omega_m": _Key("number", presets.OMEGA_M, minimum=0.0, exclusive_min=True),
    "g": _Key("number", presets.G_COUPLING, minimum=0.0),
    "delta": _Key("number", presets.DELTA_REF),
    "omega1": _Key("number", presets.OMEGA1_REF, minimum=0.0),
    "omega2": _Key("number", presets.OMEGA2_REF, minimum=0.0),
    "phonon_levels": _Key("int", 6, minimum=2),
    "n_defects": _Key("int", None, minimum=1),
    "compensate_stark": _Key("bool", True),
}

_DECOHERENCE_SCHEMA = {
    "gamma_m1": _Key("number", 1e-6, minimum=0.0),
    "gamma_e1": _Key("number", 0.01, minimum=0.0),
    "gamma_e_phi": _Key("number", None, minimum=0.0),
    "gamma_s1": _Key("number", 1e-9, minimum=0.0),
    "gamma_s_phi": _Key("number", 1e-6, minimum=0.0),
    "convention": _Key("str", "raw", choices=RATE_CONVENTIONS),
    "branching_g1": _Key("number", 0.5, minimum=0.0, maximum=1.0),
}

_INTEGRATOR_SCHEMA = {
    "rel_tol": _Key("number", 1e-8, minimum=0.0, exclusive_min=True),
    "abs_tol": _Key("number", 1e-10, minimum=0.0, exclusive_min=True),
    "max_step": _Key("number", None, minimum=0.0, exclusive_min=True),
    "initial_step": _Key("number", None, minimum=0.0, exclusive_min=True),
}

_CZ_DESIGN_KEYS = {
    "delta_r2": _Key("number", 0.3e-3, minimum=0.0, exclusive_min=True),
    "k": _Key("int", -2, maximum=-2),
    "t_rise": _Key("number", 1350.0, minimum=0.0, exclusive_min=True),
    "scale": _Key("number", presets.OMEGA2_REF * math.sqrt(2.0), minimum=0.0, exclusive_min=True),
}

_RUN_SCHEMAS = {
    "odro": {
        "duration": _Key("number", None, minimum=0.0, exclusive_min=True),
        "n_samples": _Key("int", 481, minimum=16),
        "scan": _Key("bool", False),
        "delta_scales": _Key("list-number", [1.0, 1.75, 2.5], minimum=0.0, exclusive_min=True),
        "omega1_scales": _Key("list-number", [1.0, 1.4], minimum=0.0, exclusive_min=True),
        "omega2_scales": _Key("list-number", [1.0, 1.4], minimum=0.0, exclusive_min=True),
    },
    "chevron": {
        "offset_min": _Key("number", -2.5e-3),
        "offset_max": _Key("number", 2.5e-3),
        "n_offsets": _Key("int", 41, minimum=3),
        "duration": _Key("number", None, minimum=0.0, exclusive_min=True),
        "n_times": _Key("int", 200, minimum=16),
        "fit_offsets": _Key("list-number", [-1e-3, -0.5e-3, 0.0, 0.5e-3, 1e-3]),
    },
    "swap": {
        "detuning_mode": _Key("str", "opposite", choices=("opposite", "common")),
        "detuning_min": _Key("number", -2.5e-3),
        "detuning_max": _Key("number", 2.5e-3),
        "n_detunings": _Key("int", 33, minimum=3),
        "duration": _Key("number", None, minimum=0.0, exclusive_min=True),
        "n_times": _Key("int", 201, minimum=16),
    },
    "cz": dict(_CZ_DESIGN_KEYS, phase_samples=_Key("int", 241, minimum=16)),
    "robustness": dict(_CZ_DESIGN_KEYS,
                       t2_values_us=_Key("list-number",
                                         [3.16, 10.0, 31.6, 100.0, 316.0, 1000.0],
                                         minimum=0.0, exclusive_min=True)),
    "dicke": {
        "duration": _Key("number", 3927.0, minimum=0.0, exclusive_min=True),
        "n_samples": _Key("int", 121, minimum=8),
        "scale": _Key("number", presets.OMEGA2_REF * math.sqrt(2.0), minimum=0.0, exclusive_min=True),
        "symmetric_check": _Key("bool", False),
    },
    "sd-benchmark": {
        "sigma": _Key("number", 0.020, minimum=0.0),
        "n_traj": _Key("int", 300, minimum=1),
        "n_times": _Key("int", 10, minimum=1),
        "prep_times": _Key("list-number", None, minimum=0.0, exclusive_min=True),
        "scale": _Key("number", presets.OMEGA2_REF * math.sqrt(2.0), minimum=0.0, exclusive_min=True),
    },
    "leakage": dict(_CZ_DESIGN_KEYS,
                    n_samples=_Key("int", 801, minimum=16),
                    kerr_suppression=_Key("bool", True)),
    "ac-stark": {
        "amplitude_scales": _Key("list-number", [0.6, 1.0, 1.4], minimum=0.0, exclusive_min=True),
        "duration": _Key("number", 120.0, minimum=0.0, exclusive_min=True),
    },
    "pulse-design": dict(_CZ_DESIGN_KEYS, n_csv_points=_Key("int", 1001, minimum=2)),
    "darkstate": {
        "which": _Key("str", "single", choices=("single", "two", "two-orthogonal", "collective")),
        "omega_r": _Key("number", presets.OMEGA2_REF),
        "omega_2": _Key("number", presets.OMEGA2_REF),
        "phase": _Key("number", 0.0),
    },
}

_TOP_SCHEMA_BASE = {
    "kind": _Key("str", None, choices=KINDS),
    "seed": _Key("int", 12345, minimum=0),
    "out_dir": _Key("str", None),
    "plot": _Key("bool", False),
    "jobs": _Key("int", 1, minimum=1),
}

_DEFAULT_N_DEFECTS = {"odro": 1, "chevron": 1, "swap": 2, "cz": 2, "robustness": 2,
                      "dicke": 2, "sd-benchmark": 1, "leakage": 1, "ac-stark": 1,
                      "pulse-design": 1, "darkstate": 2}

_REQUIRED_N_DEFECTS = {"odro": 1, "chevron": 1, "swap": 2, "cz": 2, "robustness": 2,
                       "sd-benchmark": 1, "ac-stark": 1}


@dataclass
class RunConfig:
    kind: str
    seed: int
    out_dir: str | None
    plot: bool
    jobs: int
    system: dict
    decoherence: DecoherenceSpec
    integrator: IntegratorConfig
    run: dict
    raw: dict = field(repr=False, default_factory=dict)

    def system_spec(self):
        """Materialize the SystemSpec for this run's frame."""
        sy = self.system
        if self.kind in ("cz", "robustness", "dicke", "leakage"):
            return presets.stirap_system(
                sy["n_defects"], sy["phonon_levels"], omega_m=sy["omega_m"], g=sy["g"],
                decoherence=self.decoherence)
        return presets.raman_system(
            sy["n_defects"], sy["phonon_levels"], omega_m=sy["omega_m"], g=sy["g"],
            Delta=sy["delta"], Omega1=sy["omega1"], Omega2=sy["omega2"],
            compensate_stark=sy["compensate_stark"], decoherence=self.decoherence)

    def effective_dict(self) -> dict:
        """Fully-resolved configuration (re-parseable, compares equal)."""
        dec = asdict(self.decoherence)
        integ = {"rel_tol": self.integrator.rel_tol, "abs_tol": self.integrator.abs_tol}
        if math.isfinite(self.integrator.max_step):
            integ["max_step"] = self.integrator.max_step
        if self.integrator.initial_step is not None:
            integ["initial_step"] = self.integrator.initial_step
        out = {
            "kind": self.kind,
            "seed": self.seed,
            "plot": self.plot,
            "jobs": self.jobs,
            "system": dict(self.system),
            "decoherence": dec,
            "integrator": integ,
            "run": {k: v for k, v in self.run.items() if v is not None},
        }
        if self.out_dir is not None:
            out["out_dir"] = self.out_dir
        return out


def parse_config_text(text: str, kind: str | None = None) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None
    return build_config(raw, kind=kind)


def parse_config(path, kind: str | None = None) -> RunConfig:
    """Read, schema-validate and default-fill a TOML run file."""
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_config_text(text, kind=kind)


def build_config(raw: dict, kind: str | None = None) -> RunConfig:
    """Validate a raw mapping into a RunConfig; ``kind`` overrides the file."""
    raw = dict(raw)
    if kind is not None:
        raw["kind"] = kind
    if "kind" not in raw:
        raise ConfigError("kind: missing experiment kind")
    kind_key = _Key("str", None, choices=KINDS).check(raw["kind"], "kind")

    schema = dict(_TOP_SCHEMA_BASE)
    schema["system"] = _SYSTEM_SCHEMA
    schema["decoherence"] = _DECOHERENCE_SCHEMA
    schema["integrator"] = _INTEGRATOR_SCHEMA
    schema["run"] = _RUN_SCHEMAS[kind_key]
    data = _apply_schema(raw, schema, "")

    system = data["system"]
    if system.get("n_defects") is None:
        system["n_defects"] = _DEFAULT_N_DEFECTS[kind_key]
    required = _REQUIRED_N_DEFECTS.get(kind_key)
    if required is not None and system["n_defects"] != required:
        raise ConfigError(f"system.n_defects: kind {kind_key!r} requires {required} defect(s), "
                          f"got {system['n_defects']}")
    if kind_key == "dicke" and system["n_defects"] < 2:
        raise ConfigError("system.n_defects: dicke preparation needs at least 2 defects")
    if system["n_defects"] > DESK_SCALE_DEFECTS:
        warnings.warn(
            f"system.n_defects={system['n_defects']} exceeds the desk-scale target of "
            f"{DESK_SCALE_DEFECTS}; runs may be very slow", stacklevel=2)

    dec = data["decoherence"]
    if dec.get("gamma_e_phi") is None:
        dec["gamma_e_phi"] = 0.0 if kind_key in ("cz", "robustness", "dicke", "leakage") else 0.02
    try:
        dec_spec = DecoherenceSpec(**dec)
    except ModelError as exc:
        raise ConfigError(f"decoherence: {exc}") from None

    integ = data["integrator"]
    integrator = IntegratorConfig(
        rel_tol=integ["rel_tol"], abs_tol=integ["abs_tol"],
        max_step=integ["max_step"] if integ.get("max_step") else math.inf,
        initial_step=integ.get("initial_step"))

    return RunConfig(
        kind=kind_key,
        seed=data["seed"],
        out_dir=data.get("out_dir"),
        plot=data["plot"],
        jobs=data["jobs"],
        system=system,
        decoherence=dec_spec,
        integrator=integrator,
        run=data["run"],
        raw=raw,
    )


# --- TOML emission (covers the subset this schema produces) -----------------

def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v) or math.isnan(v):
            raise ConfigError(f"cannot emit non-finite number {v} to TOML")
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    raise ConfigError(f"cannot emit {type(v).__name__} to TOML")


def emit_toml(data: dict) -> str:
    """Serialize a one-level-nested mapping (the effective config) to TOML."""
    buf = io.StringIO()
    tables = []
    for key, value in data.items():
        if isinstance(value, dict):
            tables.append((key, value))
        else:
            buf.write(f"{key} = {_toml_scalar(value)}\n")
    for name, table in tables:
        buf.write(f"\n[{name}]\n")
        for key, value in table.items():
            if isinstance(value, dict):
                raise ConfigError(f"{name}.{key}: nested tables beyond one level are not emitted")
            buf.write(f"{key} = {_toml_scalar(value)}\n")
    return buf.getvalue()
