"""Scenario files: a human-writable YAML mapping describing one simulated world.

Grammar (stable; see README for the full reference):

.. code-block:: yaml

    name: demo
    seed: 1
    n_blocks: 3
    moon: {n_required: 3, m_agree: 2, t_gather: 50, t_exec: 200}
    boot_check: pass            # or fail
    max_cycles: 400
    flags: {random_selection: false}
    irq_latency: [0, 0, 0]      # optional, per block
    programs:
      - ["compute 2", "trigger_sp app_triggered", "halt"]
      - ["compute 1", "compute 1", "halt"]
      - ["compute 1", "compute 1", "halt"]
    safe_program:
      - "write 0x10000 7"
      - "read 0x10000"
    triggers:
      - {cycle: 10, source: external_in_scope}
    faults:
      - {target: 2, kind: bit_flip_data, bit: 1, at_safe_instr: 0}

Instructions are compact strings: ``compute <n>``, ``read <addr>``,
``write <addr> <word>``, ``trigger_sp <source>``, ``halt``.  Numbers accept
0x-prefixed hex.  Normal programs may touch system RAM only; the safe program
(and divergent fault programs) may read/write lockstep RAM and write the
output device, and may not trigger or halt.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import yaml

from .block import (
    EXTERNAL_SOURCES,
    PROGRAM_SOURCES,
    Compute,
    Halt,
    Instruction,
    Read,
    TriggerSP,
    TriggerSource,
    Write,
)
from .bus import (
    IO_BASE,
    IO_LAST,
    LS_RAM_BASE,
    LS_RAM_LAST,
    SYSTEM_RAM_BASE,
    SYSTEM_RAM_LAST,
    WORD_MASK,
    Region,
    classify_address,
)
from .faults import INSTRUCTION_WINDOW_KINDS, FaultKind, FaultSpec
from .monitor import InvalidConfig, MoonConfig


class ScenarioError(Exception):
    """Base for everything the CLI maps to exit code 3."""


class ParseError(ScenarioError):
    def __init__(self, message: str, line: int = 1, column: int = 1):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class ValidationError(ScenarioError):
    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


# Structural-validation failures at boot reuse the same shape.
ScenarioInvalid = ValidationError


@dataclass(frozen=True)
class ExternalTrigger:
    cycle: int
    source: TriggerSource


@dataclass(frozen=True)
class Flags:
    random_selection: bool = False


@dataclass
class Scenario:
    name: str
    seed: int
    n_blocks: int
    moon: MoonConfig
    boot_check: str
    programs: List[List[Instruction]]
    safe_program: List[Instruction]
    triggers: List[ExternalTrigger] = field(default_factory=list)
    faults: List[FaultSpec] = field(default_factory=list)
    max_cycles: int = 1000
    flags: Flags = field(default_factory=Flags)
    irq_latency: Optional[List[int]] = None
    # seeded soak mode: per-block per-cycle chance of a random data-bit upset
    noise_flip_probability: float = 0.0

    def latency(self, block_id: int) -> int:
        if self.irq_latency is None:
            return 0
        return self.irq_latency[block_id]


# -- instruction text ----------------------------------------------------------


def parse_instruction(text: str, where: str) -> Instruction:
    parts = text.split()
    if not parts:
        raise ValidationError(where, "empty instruction")
    op, args = parts[0], parts[1:]

    def num(s: str, what: str) -> int:
        try:
            return int(s, 0)
        except ValueError:
            raise ValidationError(where, f"bad {what}: {s!r}") from None

    if op == "compute":
        if len(args) != 1:
            raise ValidationError(where, "compute takes one duration")
        return Compute(num(args[0], "duration"))
    if op == "read":
        if len(args) != 1:
            raise ValidationError(where, "read takes one address")
        return Read(num(args[0], "address"))
    if op == "write":
        if len(args) != 2:
            raise ValidationError(where, "write takes address and data")
        return Write(num(args[0], "address"), num(args[1], "data"))
    if op == "trigger_sp":
        if len(args) != 1:
            raise ValidationError(where, "trigger_sp takes one source")
        try:
            return TriggerSP(TriggerSource(args[0]))
        except ValueError:
            raise ValidationError(where, f"unknown trigger source: {args[0]!r}") from None
    if op == "halt":
        if args:
            raise ValidationError(where, "halt takes no arguments")
        return Halt()
    raise ValidationError(where, f"unknown instruction: {op!r}")


def format_instruction(instr: Instruction) -> str:
    if isinstance(instr, Compute):
        return f"compute {instr.duration}"
    if isinstance(instr, Read):
        return f"read 0x{instr.address:X}"
    if isinstance(instr, Write):
        return f"write 0x{instr.address:X} {instr.data}"
    if isinstance(instr, TriggerSP):
        return f"trigger_sp {instr.source.value}"
    if isinstance(instr, Halt):
        return "halt"
    raise TypeError(f"unknown instruction {instr!r}")


# -- loading -------------------------------------------------------------------


def _require(mapping: Dict, key: str, where: str):
    if key not in mapping:
        raise ValidationError(f"{where}{key}" if where.endswith(".") or not where else key, "missing")
    return mapping[key]


def _int_field(mapping: Dict, key: str, path: str) -> int:
    value = _require(mapping, key, path)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{path}{key}" if path else key, f"expected integer, got {value!r}")
    return value


def load_scenario(text: str) -> Scenario:
    """Parse and fully validate scenario text."""
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark else 1
        col = mark.column + 1 if mark else 1
        raise ParseError(exc.problem or "malformed YAML", line, col) from exc
    except yaml.YAMLError as exc:
        raise ParseError(str(exc)) from exc
    if doc is None:
        raise ParseError("empty scenario")
    if not isinstance(doc, dict):
        raise ParseError("scenario must be a mapping")
    return scenario_from_dict(doc)


def load_scenario_file(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return load_scenario(text)


def scenario_from_dict(doc: Dict) -> Scenario:
    known = {
        "name",
        "seed",
        "n_blocks",
        "moon",
        "boot_check",
        "programs",
        "safe_program",
        "triggers",
        "faults",
        "max_cycles",
        "flags",
        "irq_latency",
        "noise",
    }
    for key in doc:
        if key not in known:
            raise ValidationError(str(key), "unknown field")

    name = _require(doc, "name", "")
    if not isinstance(name, str) or not name:
        raise ValidationError("name", "must be a non-empty string")
    seed = _int_field(doc, "seed", "")
    if not (0 <= seed < 2**64):
        raise ValidationError("seed", "must fit in 64 bits")
    n_blocks = _int_field(doc, "n_blocks", "")

    moon_doc = _require(doc, "moon", "")
    if not isinstance(moon_doc, dict):
        raise ValidationError("moon", "must be a mapping")
    for key in moon_doc:
        if key not in {"n_required", "m_agree", "t_gather", "t_exec"}:
            raise ValidationError(f"moon.{key}", "unknown field")
    moon = MoonConfig(
        n_required=_int_field(moon_doc, "n_required", "moon."),
        m_agree=_int_field(moon_doc, "m_agree", "moon."),
        t_gather=_int_field(moon_doc, "t_gather", "moon."),
        t_exec=_int_field(moon_doc, "t_exec", "moon."),
    )

    boot_check = doc.get("boot_check", "pass")
    max_cycles = _int_field(doc, "max_cycles", "") if "max_cycles" in doc else 1000

    programs_doc = _require(doc, "programs", "")
    if not isinstance(programs_doc, list):
        raise ValidationError("programs", "must be a list of programs")
    programs = []
    for i, prog in enumerate(programs_doc):
        if not isinstance(prog, list):
            raise ValidationError(f"programs[{i}]", "must be a list of instruction strings")
        instrs = []
        for j, raw in enumerate(prog):
            if not isinstance(raw, str):
                raise ValidationError(f"programs[{i}][{j}]", "must be a string")
            instrs.append(parse_instruction(raw, f"programs[{i}][{j}]"))
        programs.append(instrs)

    safe_doc = _require(doc, "safe_program", "")
    if not isinstance(safe_doc, list):
        raise ValidationError("safe_program", "must be a list of instruction strings")
    safe_program = []
    for j, raw in enumerate(safe_doc):
        if not isinstance(raw, str):
            raise ValidationError(f"safe_program[{j}]", "must be a string")
        safe_program.append(parse_instruction(raw, f"safe_program[{j}]"))

    triggers = []
    for i, trig in enumerate(doc.get("triggers") or []):
        if not isinstance(trig, dict):
            raise ValidationError(f"triggers[{i}]", "must be a mapping")
        cycle = _int_field(trig, "cycle", f"triggers[{i}].")
        source_raw = _require(trig, "source", f"triggers[{i}].")
        try:
            source = TriggerSource(source_raw)
        except ValueError:
            raise ValidationError(f"triggers[{i}].source", f"unknown source {source_raw!r}") from None
        triggers.append(ExternalTrigger(cycle=cycle, source=source))

    faults = []
    for i, fdoc in enumerate(doc.get("faults") or []):
        faults.append(_fault_from_dict(fdoc, i))

    flags_doc = doc.get("flags") or {}
    if not isinstance(flags_doc, dict):
        raise ValidationError("flags", "must be a mapping")
    for key in flags_doc:
        if key != "random_selection":
            raise ValidationError(f"flags.{key}", "unknown flag")
    flags = Flags(random_selection=bool(flags_doc.get("random_selection", False)))

    irq_latency = doc.get("irq_latency")
    if irq_latency is not None:
        if not isinstance(irq_latency, list) or not all(
            isinstance(x, int) and not isinstance(x, bool) for x in irq_latency
        ):
            raise ValidationError("irq_latency", "must be a list of integers")

    noise_doc = doc.get("noise") or {}
    if not isinstance(noise_doc, dict):
        raise ValidationError("noise", "must be a mapping")
    for key in noise_doc:
        if key != "flip_probability":
            raise ValidationError(f"noise.{key}", "unknown field")
    noise_p = noise_doc.get("flip_probability", 0.0)
    if isinstance(noise_p, bool) or not isinstance(noise_p, (int, float)):
        raise ValidationError("noise.flip_probability", "must be a number")

    scenario = Scenario(
        name=name,
        seed=seed,
        n_blocks=n_blocks,
        moon=moon,
        boot_check=boot_check,
        programs=programs,
        safe_program=safe_program,
        triggers=triggers,
        faults=faults,
        max_cycles=max_cycles,
        flags=flags,
        irq_latency=list(irq_latency) if irq_latency is not None else None,
        noise_flip_probability=float(noise_p),
    )
    validate_scenario(scenario)
    return scenario


def _fault_from_dict(fdoc, i: int) -> FaultSpec:
    where = f"faults[{i}]"
    if not isinstance(fdoc, dict):
        raise ValidationError(where, "must be a mapping")
    known = {"target", "kind", "at_cycle", "at_safe_instr", "bit", "delay", "program"}
    for key in fdoc:
        if key not in known:
            raise ValidationError(f"{where}.{key}", "unknown field")
    target = _int_field(fdoc, "target", where + ".")
    kind_raw = _require(fdoc, "kind", where + ".")
    try:
        kind = FaultKind(kind_raw)
    except ValueError:
        raise ValidationError(f"{where}.kind", f"unknown fault kind {kind_raw!r}") from None
    program = None
    if fdoc.get("program") is not None:
        prog_doc = fdoc["program"]
        if not isinstance(prog_doc, list):
            raise ValidationError(f"{where}.program", "must be a list of instruction strings")
        program = tuple(
            parse_instruction(raw, f"{where}.program[{j}]") for j, raw in enumerate(prog_doc)
        )
    return FaultSpec(
        target=target,
        kind=kind,
        at_cycle=fdoc.get("at_cycle"),
        at_safe_instr=fdoc.get("at_safe_instr"),
        bit=fdoc.get("bit"),
        delay=fdoc.get("delay"),
        program=program,
    )


# -- validation ----------------------------------------------------------------


def _check_normal_instruction(instr: Instruction, where: str):
    if isinstance(instr, Compute) and instr.duration < 1:
        raise ValidationError(where, "compute duration must be >= 1")
    if isinstance(instr, (Read, Write)):
        if classify_address(instr.address) is not Region.SYSTEM_RAM:
            raise ValidationError(
                where,
                f"address 0x{instr.address:X} outside system RAM "
                f"(0x{SYSTEM_RAM_BASE:X}..0x{SYSTEM_RAM_LAST:X}); lockstep regions "
                "are not reachable from normal code",
            )
    if isinstance(instr, Write) and not (0 <= instr.data <= WORD_MASK):
        raise ValidationError(where, "data must fit in 32 bits")
    if isinstance(instr, TriggerSP) and instr.source not in PROGRAM_SOURCES:
        raise ValidationError(
            where, f"programs may not cite external trigger source {instr.source.value}"
        )


def _check_safe_instruction(instr: Instruction, where: str):
    if isinstance(instr, (TriggerSP, Halt)):
        raise ValidationError(where, "safe program may not trigger or halt")
    if isinstance(instr, Compute) and instr.duration < 1:
        raise ValidationError(where, "compute duration must be >= 1")
    if isinstance(instr, Read):
        if not (LS_RAM_BASE <= instr.address <= LS_RAM_LAST):
            raise ValidationError(where, "safe code reads lockstep RAM only")
    if isinstance(instr, Write):
        region = classify_address(instr.address)
        if region not in (Region.LS_RAM, Region.IO):
            raise ValidationError(
                where,
                f"address 0x{instr.address:X} outside lockstep RAM "
                f"(0x{LS_RAM_BASE:X}..0x{LS_RAM_LAST:X}) and output range "
                f"(0x{IO_BASE:X}..0x{IO_LAST:X})",
            )
        if not (0 <= instr.data <= WORD_MASK):
            raise ValidationError(where, "data must fit in 32 bits")


def validate_scenario(s: Scenario) -> None:
    """Structural validation shared by the loader and by boot."""
    if s.n_blocks < 1:
        raise ValidationError("n_blocks", "must be >= 1")
    if s.max_cycles < 1:
        raise ValidationError("max_cycles", "must be >= 1")
    if s.boot_check not in ("pass", "fail"):
        raise ValidationError("boot_check", "must be 'pass' or 'fail'")
    try:
        s.moon.validate()
    except InvalidConfig as exc:
        raise ValidationError("moon", str(exc)) from None
    if s.n_blocks < s.moon.n_required:
        raise ValidationError(
            "n_blocks", f"must be >= moon.n_required ({s.moon.n_required})"
        )
    if len(s.programs) != s.n_blocks:
        raise ValidationError(
            "programs", f"expected {s.n_blocks} programs, got {len(s.programs)}"
        )
    for i, prog in enumerate(s.programs):
        for j, instr in enumerate(prog):
            _check_normal_instruction(instr, f"programs[{i}][{j}]")
    for j, instr in enumerate(s.safe_program):
        _check_safe_instruction(instr, f"safe_program[{j}]")
    for i, trig in enumerate(s.triggers):
        if trig.cycle < 1:
            raise ValidationError(f"triggers[{i}].cycle", "must be >= 1")
        if trig.source not in EXTERNAL_SOURCES:
            raise ValidationError(
                f"triggers[{i}].source", "scheduled triggers must use an external source"
            )
    if s.irq_latency is not None:
        if len(s.irq_latency) != s.n_blocks:
            raise ValidationError("irq_latency", f"expected {s.n_blocks} entries")
        if any(x < 0 for x in s.irq_latency):
            raise ValidationError("irq_latency", "latencies must be >= 0")
    if not (0.0 <= s.noise_flip_probability <= 1.0):
        raise ValidationError("noise.flip_probability", "must be within 0..1")
    for i, f in enumerate(s.faults):
        _validate_fault(f, i, s)


def _validate_fault(f: FaultSpec, i: int, s: Scenario) -> None:
    where = f"faults[{i}]"
    if not (0 <= f.target < s.n_blocks):
        raise ValidationError(f"{where}.target", f"no such block {f.target}")
    windows = [w for w in (f.at_cycle, f.at_safe_instr) if w is not None]
    if len(windows) != 1:
        raise ValidationError(where, "exactly one of at_cycle / at_safe_instr required")
    if f.at_cycle is not None and f.at_cycle < 0:
        raise ValidationError(f"{where}.at_cycle", "must be >= 0")
    if f.at_safe_instr is not None:
        if f.kind not in INSTRUCTION_WINDOW_KINDS:
            raise ValidationError(
                f"{where}.at_safe_instr",
                f"{f.kind.value} activates before lockstep; give at_cycle",
            )
        if not (0 <= f.at_safe_instr < max(len(s.safe_program), 1)):
            raise ValidationError(
                f"{where}.at_safe_instr",
                f"safe program has {len(s.safe_program)} instructions",
            )
    if f.kind in (FaultKind.BIT_FLIP_DATA, FaultKind.BIT_FLIP_ADDRESS):
        if f.bit is None or not (0 <= f.bit < 32):
            raise ValidationError(f"{where}.bit", "bit index 0..31 required")
    elif f.bit is not None:
        raise ValidationError(f"{where}.bit", f"not a {f.kind.value} parameter")
    if f.kind is FaultKind.START_JITTER:
        if f.delay is None or f.delay < 1:
            raise ValidationError(f"{where}.delay", "delay >= 1 required")
    elif f.delay is not None:
        raise ValidationError(f"{where}.delay", f"not a {f.kind.value} parameter")
    if f.kind is FaultKind.DIVERGENT_PROGRAM:
        if f.program is None:
            raise ValidationError(f"{where}.program", "alternate program required")
        for j, instr in enumerate(f.program):
            _check_safe_instruction(instr, f"{where}.program[{j}]")
    elif f.program is not None:
        raise ValidationError(f"{where}.program", f"not a {f.kind.value} parameter")


# -- serialization --------------------------------------------------------------


def scenario_to_dict(s: Scenario) -> Dict:
    doc: Dict = {
        "name": s.name,
        "seed": s.seed,
        "n_blocks": s.n_blocks,
        "moon": {
            "n_required": s.moon.n_required,
            "m_agree": s.moon.m_agree,
            "t_gather": s.moon.t_gather,
            "t_exec": s.moon.t_exec,
        },
        "boot_check": s.boot_check,
        "max_cycles": s.max_cycles,
        "flags": {"random_selection": s.flags.random_selection},
        "programs": [[format_instruction(x) for x in prog] for prog in s.programs],
        "safe_program": [format_instruction(x) for x in s.safe_program],
    }
    if s.irq_latency is not None:
        doc["irq_latency"] = list(s.irq_latency)
    if s.noise_flip_probability > 0.0:
        doc["noise"] = {"flip_probability": s.noise_flip_probability}
    if s.triggers:
        doc["triggers"] = [
            {"cycle": t.cycle, "source": t.source.value} for t in s.triggers
        ]
    if s.faults:
        doc["faults"] = [_fault_to_dict(f) for f in s.faults]
    return doc


def _fault_to_dict(f: FaultSpec) -> Dict:
    fd: Dict = {"target": f.target, "kind": f.kind.value}
    if f.at_cycle is not None:
        fd["at_cycle"] = f.at_cycle
    if f.at_safe_instr is not None:
        fd["at_safe_instr"] = f.at_safe_instr
    if f.bit is not None:
        fd["bit"] = f.bit
    if f.delay is not None:
        fd["delay"] = f.delay
    if f.program is not None:
        fd["program"] = [format_instruction(x) for x in f.program]
    return fd


def serialize_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False, default_flow_style=False)


def scenario_digest(s: Scenario) -> str:
    return hashlib.sha256(serialize_scenario(s).encode("utf-8")).hexdigest()
