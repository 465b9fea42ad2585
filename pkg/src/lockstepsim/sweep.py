"""Parameter sweeps: rendezvous arrival orderings and fault masking.

Two sweep families, both built from generated scenarios so every point is
self-contained and reproducible:

* Arrival sweep - for a group size N out of B blocks, enumerate per-block
  IRQ latencies and check the admission rule on every ordering: exactly N
  blocks accepted, acceptance simultaneous, the accepted set is the first N
  in (arrival cycle, block id) order, everyone else rejected, and the
  session still completes.

* Fault sweep - inject single faults (and optionally pairs on distinct
  blocks) into a group with spares and demand that the committed memory
  image (voted RAM plus the I/O log) is identical to a fault-free reference
  run.  Silenced blocks cannot leave the group, so those points end in the
  safe state by exec timeout - their memory image must still match.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import yaml

from .block import Compute, Halt, Instruction, Read, TriggerSP, TriggerSource, Write
from .bus import IO_BASE, LS_RAM_BASE
from .engine import Report, run
from .faults import FaultKind, FaultSpec
from .monitor import MoonConfig
from .scenario import Flags, Scenario, ScenarioError, format_instruction

DEFAULT_SAFE_PROGRAM: Tuple[Instruction, ...] = (
    Write(LS_RAM_BASE, 7),
    Write(IO_BASE, 99),
    Compute(2),
    Read(LS_RAM_BASE),
)

DIVERGENT_STREAM: Tuple[Instruction, ...] = (
    Write(LS_RAM_BASE, 5),
    Read(LS_RAM_BASE),
)


@dataclass
class SweepPoint:
    params: Dict
    ok: bool
    detail: str = ""

    def describe(self) -> str:
        parts = ", ".join(f"{k}={v}" for k, v in self.params.items())
        status = "ok" if self.ok else f"FAIL ({self.detail})"
        return f"[{parts}] {status}"


@dataclass
class SweepResult:
    mode: str
    points: List[SweepPoint] = field(default_factory=list)

    @property
    def failures(self) -> List[SweepPoint]:
        return [p for p in self.points if not p.ok]

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        return (
            f"{self.mode} sweep: {len(self.points)} points, "
            f"{len(self.failures)} failing"
        )


# ---------------------------------------------------------------------------
# scenario builders
# ---------------------------------------------------------------------------


def _padded_program(lead: Sequence[Instruction], total: int) -> Tuple[Instruction, ...]:
    pad = total - len(lead) - 1
    return tuple(lead) + (Compute(1),) * pad + (Halt(),)


def build_rendezvous_scenario(
    n_blocks: int,
    n_required: int,
    m_agree: int,
    irq_latency: Sequence[int],
    name: str = "rendezvous-sweep",
    random_selection: bool = False,
    seed: int = 1,
) -> Scenario:
    """Blocks at an instruction boundary every cycle; block 0 requests."""
    programs = [_padded_program((Compute(1), TriggerSP(TriggerSource.APP_TRIGGERED)), 24)]
    programs += [_padded_program((), 24) for _ in range(n_blocks - 1)]
    return Scenario(
        name=name,
        seed=seed,
        n_blocks=n_blocks,
        moon=MoonConfig(n_required=n_required, m_agree=m_agree, t_gather=15, t_exec=15),
        boot_check="pass",
        programs=programs,
        safe_program=(Write(LS_RAM_BASE, 1), Read(LS_RAM_BASE)),
        triggers=(),
        faults=(),
        max_cycles=80,
        flags=Flags(random_selection=random_selection),
        irq_latency=tuple(irq_latency),
    )


def build_masking_scenario(
    n_blocks: int,
    n_required: int,
    m_agree: int,
    faults: Sequence[FaultSpec],
    name: str = "masking-sweep",
    safe_program: Optional[Sequence[Instruction]] = None,
    seed: int = 1,
) -> Scenario:
    """Uniform zero-latency arrivals so the lowest block ids form the group."""
    programs = [_padded_program((Compute(1), TriggerSP(TriggerSource.APP_TRIGGERED)), 16)]
    programs += [_padded_program((), 16) for _ in range(n_blocks - 1)]
    return Scenario(
        name=name,
        seed=seed,
        n_blocks=n_blocks,
        moon=MoonConfig(n_required=n_required, m_agree=m_agree, t_gather=10, t_exec=12),
        boot_check="pass",
        programs=programs,
        safe_program=tuple(safe_program or DEFAULT_SAFE_PROGRAM),
        triggers=(),
        faults=tuple(faults),
        max_cycles=60,
        flags=Flags(),
    )


# ---------------------------------------------------------------------------
# arrival sweep
# ---------------------------------------------------------------------------


def expected_admission(
    gather_cycle: int, latencies: Sequence[int], n_required: int
) -> Tuple[List[int], List[int], int]:
    """Admission oracle from latencies alone.

    A block at a permanent instruction boundary issues its sync read on the
    cycle after its IRQ latch lands, so it arrives at gather + latency + 1.
    Returns (accepted ids, rejected ids, entry cycle).
    """
    arrivals = sorted(
        (gather_cycle + lat + 1, b) for b, lat in enumerate(latencies)
    )
    accepted = sorted(b for _, b in arrivals[:n_required])
    rejected = sorted(b for _, b in arrivals[n_required:])
    entry = arrivals[n_required - 1][0]
    return accepted, rejected, entry


def check_arrival_point(report: Report, latencies: Sequence[int], n_required: int) -> str:
    """Return '' if the run honors the admission rule, else a complaint."""
    gather = [
        e.cycle
        for e in report.trace
        if e.entity == "monitor"
        and e.kind == "state_change"
        and e.detail.get("to") == "gathering"
    ]
    if len(gather) != 1:
        return f"expected one gathering entry, saw {len(gather)}"
    accepted_events = [e for e in report.trace if e.kind == "accept"]
    accepted = sorted(e.detail["block"] for e in accepted_events)
    accept_cycles = {e.cycle for e in accepted_events}
    rejected = sorted(
        e.detail["block"]
        for e in report.trace
        if e.kind == "reject" and e.detail.get("context") != "exit_not_enabled"
    )
    want_accept, want_reject, want_entry = expected_admission(
        gather[0], latencies, n_required
    )
    if accepted != want_accept:
        return f"accepted {accepted}, expected {want_accept}"
    if rejected != want_reject:
        return f"rejected {rejected}, expected {want_reject}"
    if len(accept_cycles) > 1:
        return f"acceptance not simultaneous: cycles {sorted(accept_cycles)}"
    if accept_cycles and accept_cycles != {want_entry}:
        return f"entry at {sorted(accept_cycles)}, expected {want_entry}"
    releases = [e for e in report.trace if e.kind == "release"]
    if len(releases) != 1:
        return f"expected one release, saw {len(releases)}"
    if sorted(releases[0].detail["blocks"]) != want_accept:
        return f"released {releases[0].detail['blocks']}, expected {want_accept}"
    if report.final_state != "normal_processing":
        return f"ended in {report.final_state}"
    return ""


def arrival_sweep(
    n_blocks: int,
    n_required: int,
    m_agree: int,
    latency_max: int = 3,
) -> SweepResult:
    result = SweepResult(mode="arrivals")
    for latencies in itertools.product(range(latency_max + 1), repeat=n_blocks):
        scenario = build_rendezvous_scenario(
            n_blocks, n_required, m_agree, latencies,
            name=f"arrivals-{n_blocks}b-{n_required}oo",
        )
        report = run(scenario)
        complaint = check_arrival_point(report, latencies, n_required)
        result.points.append(
            SweepPoint(
                params={"latencies": latencies},
                ok=not complaint,
                detail=complaint,
            )
        )
    return result


# ---------------------------------------------------------------------------
# fault sweep
# ---------------------------------------------------------------------------


def placement_catalog(
    target: int, safe_len: int, placements: str = "full"
) -> List[Tuple[str, FaultSpec]]:
    """All injection points for one block: (label, spec) pairs."""
    out: List[Tuple[str, FaultSpec]] = []
    instr_kinds = (
        (FaultKind.BIT_FLIP_DATA, {"bit": 5}),
        (FaultKind.BIT_FLIP_ADDRESS, {"bit": 3}),
        (FaultKind.DIVERGENT_PROGRAM, {"program": DIVERGENT_STREAM}),
        (FaultKind.STUCK_SILENT, {}),
    )
    if placements == "full":
        spots: Iterable[Tuple[int, Tuple[FaultKind, Dict]]] = (
            (k, kind) for k in range(safe_len) for kind in instr_kinds
        )
    else:  # one representative spot per kind
        spots = ((i % safe_len, kind) for i, kind in enumerate(instr_kinds))
    for k, (kind, extra) in spots:
        label = f"{kind.value}@{k}"
        out.append((label, FaultSpec(target=target, kind=kind, at_safe_instr=k, **extra)))
    out.append((
        "no_show",
        FaultSpec(target=target, kind=FaultKind.NO_SHOW, at_cycle=1),
    ))
    out.append((
        "start_jitter",
        FaultSpec(target=target, kind=FaultKind.START_JITTER, at_cycle=1, delay=5),
    ))
    return out


def masking_reference(
    n_blocks: int, n_required: int, m_agree: int,
    safe_program: Optional[Sequence[Instruction]] = None,
) -> Report:
    scenario = build_masking_scenario(
        n_blocks, n_required, m_agree, faults=(),
        name="masking-reference", safe_program=safe_program,
    )
    return run(scenario, trace_enabled=False)


def check_masking_point(report: Report, reference: Report) -> str:
    if report.ls_ram != reference.ls_ram:
        return "voted RAM differs from reference"
    if report.io_log != reference.io_log:
        return "I/O log differs from reference"
    return ""


def fault_sweep(
    n_required: int,
    m_agree: int,
    spares: int = 1,
    max_simultaneous: int = 1,
    placements: str = "full",
    safe_program: Optional[Sequence[Instruction]] = None,
) -> SweepResult:
    """Sweep tolerated fault combinations; every point must mask cleanly.

    Faults are placed only on blocks that join the group under fault-free
    arrival order (ids 0..N-1); spares make the group whole when a fault
    keeps its target out of the rendezvous entirely.
    """
    n_blocks = n_required + spares
    safe = tuple(safe_program or DEFAULT_SAFE_PROGRAM)
    reference = masking_reference(n_blocks, n_required, m_agree, safe)
    result = SweepResult(mode="faults")

    def run_point(specs: Sequence[FaultSpec], labels: Sequence[str], targets: Sequence[int]) -> None:
        scenario = build_masking_scenario(
            n_blocks, n_required, m_agree, faults=specs, safe_program=safe,
        )
        report = run(scenario, trace_enabled=False)
        complaint = check_masking_point(report, reference)
        result.points.append(
            SweepPoint(
                params={"targets": tuple(targets), "faults": tuple(labels)},
                ok=not complaint,
                detail=complaint,
            )
        )

    group = range(n_required)
    singles = {
        t: placement_catalog(t, len(safe), placements) for t in group
    }
    for t in group:
        for label, spec in singles[t]:
            run_point((spec,), (label,), (t,))
    if max_simultaneous >= 2:
        pair_catalog = {
            t: placement_catalog(t, len(safe), placements) for t in group
        }
        for a, b in itertools.combinations(group, 2):
            for (la, sa), (lb, sb) in itertools.product(pair_catalog[a], pair_catalog[b]):
                run_point((sa, sb), (la, lb), (a, b))
    return result


# ---------------------------------------------------------------------------
# sweep specification files
# ---------------------------------------------------------------------------

_ARRIVAL_KEYS = {"mode", "n_blocks", "n_required", "m_agree", "latency_max"}
_FAULT_KEYS = {"mode", "n_required", "m_agree", "spares", "max_simultaneous", "placements"}


def sweep_from_dict(doc: Dict) -> SweepResult:
    if not isinstance(doc, dict):
        raise ScenarioError("sweep spec must be a mapping")
    mode = doc.get("mode")
    if mode == "arrivals":
        unknown = set(doc) - _ARRIVAL_KEYS
        if unknown:
            raise ScenarioError(f"unknown sweep fields: {sorted(unknown)}")
        n_blocks = _small_int(doc, "n_blocks", 2, 6)
        n_required = _small_int(doc, "n_required", 2, n_blocks)
        m_agree = _small_int(doc, "m_agree", 2, n_required)
        latency_max = _small_int(doc, "latency_max", 0, 5, default=3)
        return arrival_sweep(n_blocks, n_required, m_agree, latency_max)
    if mode == "faults":
        unknown = set(doc) - _FAULT_KEYS
        if unknown:
            raise ScenarioError(f"unknown sweep fields: {sorted(unknown)}")
        n_required = _small_int(doc, "n_required", 2, 7)
        m_agree = _small_int(doc, "m_agree", 2, n_required)
        spares = _small_int(doc, "spares", 0, 4, default=1)
        max_simultaneous = _small_int(doc, "max_simultaneous", 1, 2, default=1)
        placements = doc.get("placements", "full")
        if placements not in ("full", "representative"):
            raise ScenarioError("placements must be 'full' or 'representative'")
        return fault_sweep(n_required, m_agree, spares, max_simultaneous, placements)
    raise ScenarioError("sweep mode must be 'arrivals' or 'faults'")


def _small_int(doc: Dict, key: str, lo: int, hi: int, default: Optional[int] = None) -> int:
    if key not in doc:
        if default is not None:
            return default
        raise ScenarioError(f"sweep spec missing '{key}'")
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"sweep field '{key}' must be an integer")
    if not lo <= value <= hi:
        raise ScenarioError(f"sweep field '{key}' must be in {lo}..{hi}")
    return value


def load_sweep_file(path: str) -> SweepResult:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read sweep spec: {exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"sweep spec is not valid YAML: {exc}") from None
    return sweep_from_dict(doc)


def describe_safe_program() -> List[str]:
    """Human-readable default safe program (for docs and CLI help)."""
    return [format_instruction(i) for i in DEFAULT_SAFE_PROGRAM]
