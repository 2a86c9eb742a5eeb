"""Tunable-parameter registry.

A subsystem declares the parameters the tuner may adjust: an unsigned integer
range, how to step through it (linearly or by doubling), an optional guard
making the parameter active only while another parameter holds a specific
value, and an accessor for reading/writing the live value.  Subsystems also
carry three probes: workload sensors, the optimization target, and a
bottleneck check.

Registries can be populated programmatically or from a line-oriented spec
file (see :func:`parse_spec_text`).
"""

from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    ActivationFailure,
    DuplicateName,
    GuardValueOutOfParentRange,
    InvalidRange,
    MissingParentAssignment,
    ParseError,
    SpecError,
    UnknownGuardParent,
    UnknownSubsystem,
)

DEFAULT_BUSY_THRESHOLD = 80

# A concrete assignment of values to parameter names.
Setting = dict[str, int]


class StepMode(Enum):
    LINEAR = "linear"
    EXPONENTIAL = "exponential"

    @classmethod
    def parse(cls, text: str) -> "StepMode":
        try:
            return cls(text.lower())
        except ValueError:
            raise ParseError(f"unknown step mode {text!r}") from None


@dataclass(frozen=True)
class Guard:
    """Parameter dependency: active only while ``parent == required_value``."""

    parent: str
    required_value: int


class StorageCell:
    """Default accessor: the framework itself owns the value's storage."""

    __slots__ = ("value",)

    def __init__(self, value: int = 0):
        self.value = value

    def get(self) -> int:
        return self.value

    def set(self, value: int) -> None:
        self.value = value


class FnAccessor:
    """Accessor backed by caller-supplied getter/setter callables."""

    __slots__ = ("_get", "_set")

    def __init__(self, getter, setter):
        self._get = getter
        self._set = setter

    def get(self) -> int:
        return self._get()

    def set(self, value: int) -> None:
        self._set(value)


@dataclass
class ParamSpec:
    """Metadata of one tunable parameter."""

    name: str
    subsystem: str
    min_value: int
    max_value: int
    step_mode: StepMode = StepMode.LINEAR
    guard: Guard | None = None
    accessor: object | None = None  # anything with get()/set(v); None -> StorageCell


@dataclass
class SubsystemSpec:
    """A tunable target: its parameters plus the three probes.

    ``sensor_probe`` returns ``(values, thresholds)``, two equal-length
    vectors of unsigned integers (thresholds are percentages).
    ``target_probe`` returns the unsigned performance score the tuner
    maximizes.  ``bottleneck_probe`` returns True while this subsystem is
    the current bottleneck; the conventional implementation compares the
    busy fraction against ``busy_threshold`` percent.
    """

    id: str
    busy_threshold: int = DEFAULT_BUSY_THRESHOLD
    params: list[str] = field(default_factory=list)
    sensor_probe: object | None = None
    target_probe: object | None = None
    bottleneck_probe: object | None = None
    sensor_count: int | None = None


def candidate_values(param: ParamSpec) -> list[int]:
    """Enumerate the ordered candidate ladder for one parameter.

    Linear parameters step by one across the whole range.  Exponential
    parameters double starting from max(min, 1), truncated at the maximum,
    with the maximum appended when the doubling ladder misses it and a zero
    prepended when the range starts at zero.  The result is strictly
    increasing and always contains the maximum.
    """
    if param.step_mode is StepMode.LINEAR:
        return list(range(param.min_value, param.max_value + 1))
    out: list[int] = []
    if param.min_value == 0 and param.max_value > 0:
        out.append(0)
    v = max(param.min_value, 1)
    while v <= param.max_value:
        out.append(v)
        v *= 2
    if not out or out[-1] != param.max_value:
        out.append(param.max_value)
    return out


def is_active(param: ParamSpec, setting: Setting) -> bool:
    """True when ``param`` participates in the search under ``setting``."""
    if param.guard is None:
        return True
    if param.guard.parent not in setting:
        raise MissingParentAssignment(
            f"setting does not assign guard parent {param.guard.parent!r}"
        )
    return setting[param.guard.parent] == param.guard.required_value


class Registry:
    """Holds subsystems and parameters in registration order.

    Built single-threaded during startup and treated as immutable afterwards,
    so reads are safe from any thread.
    """

    def __init__(self):
        self._subsystems: dict[str, SubsystemSpec] = {}
        self._params: dict[str, ParamSpec] = {}

    # -- registration -----------------------------------------------------

    def register_subsystem(
        self, subsystem_id: str, busy_threshold: int = DEFAULT_BUSY_THRESHOLD
    ) -> SubsystemSpec:
        if subsystem_id in self._subsystems:
            raise DuplicateName(f"subsystem {subsystem_id!r} already registered")
        spec = SubsystemSpec(id=subsystem_id, busy_threshold=busy_threshold)
        self._subsystems[subsystem_id] = spec
        return spec

    def register_param(self, spec: ParamSpec) -> ParamSpec:
        if spec.subsystem not in self._subsystems:
            raise UnknownSubsystem(f"subsystem {spec.subsystem!r} not registered")
        if spec.name in self._params:
            raise DuplicateName(f"parameter {spec.name!r} already registered")
        if spec.min_value > spec.max_value:
            raise InvalidRange(
                f"parameter {spec.name!r}: min {spec.min_value} > max {spec.max_value}"
            )
        if spec.min_value < 0:
            raise InvalidRange(f"parameter {spec.name!r}: values are unsigned")
        if spec.guard is not None:
            parent = self._params.get(spec.guard.parent)
            if parent is None or parent.subsystem != spec.subsystem:
                raise UnknownGuardParent(
                    f"parameter {spec.name!r}: guard parent "
                    f"{spec.guard.parent!r} not registered in subsystem "
                    f"{spec.subsystem!r}"
                )
            if not (parent.min_value <= spec.guard.required_value <= parent.max_value):
                raise GuardValueOutOfParentRange(
                    f"parameter {spec.name!r}: guard value "
                    f"{spec.guard.required_value} outside parent range"
                )
        if spec.accessor is None:
            spec.accessor = StorageCell(spec.min_value)
        self._params[spec.name] = spec
        self._subsystems[spec.subsystem].params.append(spec.name)
        return spec

    def attach_probes(
        self,
        subsystem_id: str,
        sensor_probe,
        target_probe,
        bottleneck_probe,
        sensor_count: int,
    ) -> None:
        spec = self.subsystem(subsystem_id)
        spec.sensor_probe = sensor_probe
        spec.target_probe = target_probe
        spec.bottleneck_probe = bottleneck_probe
        spec.sensor_count = sensor_count

    # -- lookups -----------------------------------------------------------

    def subsystem(self, subsystem_id: str) -> SubsystemSpec:
        try:
            return self._subsystems[subsystem_id]
        except KeyError:
            raise UnknownSubsystem(f"subsystem {subsystem_id!r} not registered") from None

    def subsystems(self) -> list[SubsystemSpec]:
        return list(self._subsystems.values())

    def param(self, name: str) -> ParamSpec:
        return self._params[name]

    def params_of(self, subsystem_id: str) -> list[ParamSpec]:
        return [self._params[n] for n in self.subsystem(subsystem_id).params]

    def registration_index(self, name: str) -> int:
        spec = self._params[name]
        return self._subsystems[spec.subsystem].params.index(name)

    # -- live values -------------------------------------------------------

    def read_setting(self, subsystem_id: str) -> Setting:
        return {p.name: p.accessor.get() for p in self.params_of(subsystem_id)}

    def activate(self, subsystem_id: str, setting: Setting) -> None:
        """Write ``setting`` into the live parameters, in registration order."""
        for p in self.params_of(subsystem_id):
            if p.name not in setting:
                continue
            value = setting[p.name]
            if not (p.min_value <= value <= p.max_value):
                raise ActivationFailure(
                    p.name, ValueError(f"value {value} outside [{p.min_value}, {p.max_value}]")
                )
            try:
                p.accessor.set(value)
            except Exception as exc:  # noqa: BLE001 - setter is caller code
                raise ActivationFailure(p.name, exc) from exc

    # -- spec-file round trip ----------------------------------------------

    def to_spec_text(self) -> str:
        lines = []
        for sub in self._subsystems.values():
            lines.append(f"subsystem {sub.id} busy_threshold={sub.busy_threshold}")
        for p in self._params.values():
            entry = (
                f"param {p.subsystem}.{p.name} min={p.min_value} max={p.max_value} "
                f"step={p.step_mode.value}"
            )
            if p.guard is not None:
                entry += f" guard={p.guard.parent}={p.guard.required_value}"
            lines.append(entry)
        return "\n".join(lines) + ("\n" if lines else "")


def _parse_kv(token: str, line_no: int) -> tuple[str, str]:
    key, sep, value = token.partition("=")
    if not sep or not key or not value:
        raise ParseError(f"expected key=value, got {token!r}").at_line(line_no)
    return key, value


def _parse_uint(text: str, what: str, line_no: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ParseError(f"{what} must be an unsigned integer, got {text!r}").at_line(
            line_no
        ) from None
    if value < 0:
        raise ParseError(f"{what} must be an unsigned integer, got {text!r}").at_line(line_no)
    return value


def parse_spec_text(text: str) -> Registry:
    """Build a registry from spec-file text.

    Grammar (one declaration per line, ``#`` starts a comment):

        subsystem <id> busy_threshold=<int>
        param <subsys>.<name> min=<u64> max=<u64> step=<linear|exponential> \
[guard=<name>=<u64>]

    Unknown keys are a :class:`ParseError`; registration errors carry the
    offending line number.
    """
    registry = Registry()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind = tokens[0]
        try:
            if kind == "subsystem":
                if len(tokens) < 2:
                    raise ParseError("subsystem declaration needs an id")
                busy = DEFAULT_BUSY_THRESHOLD
                for token in tokens[2:]:
                    key, value = _parse_kv(token, line_no)
                    if key == "busy_threshold":
                        busy = _parse_uint(value, "busy_threshold", line_no)
                    else:
                        raise ParseError(f"unknown key {key!r}")
                registry.register_subsystem(tokens[1], busy_threshold=busy)
            elif kind == "param":
                if len(tokens) < 2 or "." not in tokens[1]:
                    raise ParseError("param declaration needs <subsystem>.<name>")
                subsystem, _, name = tokens[1].partition(".")
                fields: dict[str, str] = {}
                for token in tokens[2:]:
                    key, value = _parse_kv(token, line_no)
                    if key not in ("min", "max", "step", "guard"):
                        raise ParseError(f"unknown key {key!r}")
                    fields[key] = value
                for required in ("min", "max", "step"):
                    if required not in fields:
                        raise ParseError(f"param {name!r} missing {required}=")
                guard = None
                if "guard" in fields:
                    parent, sep, req = fields["guard"].partition("=")
                    if not sep or not parent:
                        raise ParseError("guard must look like guard=<param>=<value>")
                    guard = Guard(parent, _parse_uint(req, "guard value", line_no))
                registry.register_param(
                    ParamSpec(
                        name=name,
                        subsystem=subsystem,
                        min_value=_parse_uint(fields["min"], "min", line_no),
                        max_value=_parse_uint(fields["max"], "max", line_no),
                        step_mode=StepMode.parse(fields["step"]),
                        guard=guard,
                    )
                )
            else:
                raise ParseError(f"unknown declaration {kind!r}")
        except SpecError as exc:
            if exc.line_no is None:
                exc.at_line(line_no)
            raise
    return registry


def load_spec_file(path: str) -> Registry:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec_text(fh.read())
