"""System controller and cycle engine.

One world = blocks + memory map + monitor + fault engine + trace.  Each cycle
executes seven phases in a fixed order:

1. scheduled fault activation
2. scheduled external triggers
3. block ticks, ascending block id (transactions collected, not yet served)
4. monitor rendezvous work: IRQ latch delivery, session requests, entry
   arrivals and admission, exit arrivals and group release
5. bus commit: system RAM (serialized by ascending block id), then the voted
   safe bus (compare, select, forward, broadcast the completion)
6. availability observer
7. system-level state transitions

Responses produced in phases 4-5 of cycle t reach the issuing block at its
tick in cycle t+1, so an unstalled bus operation costs one cycle.

The system-level machine is Boot, then NormalProcessing (or SafeState on a
failed boot check); a session request moves it to Synchronizing, admission to
SafeProcessingMode, completed release back to NormalProcessing.  An
availability error freezes the monitor and drops the system into SafeState,
which is absorbing and ends the simulation; only the terminal marker event
may follow.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from . import __version__ as VERSION
from .block import BlockState, ProcessingBlock, TriggerSource
from .bus import (
    LOCKSTEP_SYNC_ADDRESS,
    BusTransaction,
    MemoryMap,
    Region,
    TxKind,
    UnmappedAddress,
    classify_address,
)
from .faults import FaultEngine
from .monitor import LockstepMonitor, SyncState
from .scenario import Scenario, scenario_digest, validate_scenario
from .trace import TraceEvent


class SimInternalError(Exception):
    """A simulator invariant broke; maps to exit code 4."""


class SystemState(Enum):
    BOOT = "boot"
    SAFE_STATE = "safe_state"
    NORMAL_PROCESSING = "normal_processing"
    SYNCHRONIZING = "synchronizing"
    SAFE_PROCESSING_MODE = "safe_processing_mode"


@dataclass
class SessionRecord:
    gather_cycle: int
    lockstep_cycle: Optional[int] = None
    release_cycle: Optional[int] = None
    accepted: List[int] = field(default_factory=list)
    rejected: List[int] = field(default_factory=list)
    outcome: str = "open"

    def to_dict(self) -> Dict:
        return {
            "gather_cycle": self.gather_cycle,
            "lockstep_cycle": self.lockstep_cycle,
            "release_cycle": self.release_cycle,
            "accepted": list(self.accepted),
            "rejected": list(self.rejected),
            "outcome": self.outcome,
        }


class World:
    """All mutable state of one simulation; independent worlds never share."""

    def __init__(self, scenario: Scenario, seed: Optional[int] = None, trace_enabled: bool = True):
        validate_scenario(scenario)
        self.scenario = scenario
        self.effective_seed = scenario.seed if seed is None else seed
        self.rng = random.Random(self.effective_seed)
        self.cycle = 0
        self.system_state = SystemState.BOOT
        self.memory = MemoryMap()
        self.monitor = LockstepMonitor(scenario.n_blocks)
        self.blocks = [
            ProcessingBlock(i, scenario.programs[i], scenario.safe_program)
            for i in range(scenario.n_blocks)
        ]
        self.fault_engine = FaultEngine(list(scenario.faults))
        for b in self.blocks:
            b.safe_fetch_hook = self.fault_engine.make_hook(b.block_id)
        self.trace_enabled = trace_enabled
        self.trace: List[TraceEvent] = []
        self.mailbox: Dict[int, int] = {}
        self.held_tx: Dict[int, BusTransaction] = {}
        self.pending_irq: List[Tuple[int, int]] = []  # (deliver_cycle, block_id)
        self.request_queue: List[Tuple[object, TriggerSource]] = []
        self.sessions: List[SessionRecord] = []
        self.counters = {
            "accepted": 0,
            "rejected": 0,
            "masked_fault_cycles": 0,
            "no_majority_cycles": 0,
            "availability_errors": 0,
        }
        self.end_reason: Optional[str] = None
        self.boot_result: Optional[str] = None
        # per-cycle transition flags
        self._flag_synchronizing = False
        self._flag_lockstep = False
        self._flag_complete = False
        self._flag_safe_state = False

    # -- trace -------------------------------------------------------------

    def emit(self, phase: int, entity, kind: str, detail: Dict) -> None:
        if self.trace_enabled:
            self.trace.append(TraceEvent(self.cycle, phase, entity, kind, detail))

    def _set_system_state(self, new: SystemState) -> None:
        old = self.system_state
        self.system_state = new
        self.emit(7, "system", "state_change", {"from": old.value, "to": new.value})

    # -- boot ----------------------------------------------------------------

    def boot(self) -> None:
        if self.system_state is not SystemState.BOOT:
            raise SimInternalError("boot called twice")
        mode = self.monitor.configure(self.scenario.moon)
        self.boot_result = self.scenario.boot_check
        self.emit(
            1,
            "system",
            "boot",
            {
                "result": self.scenario.boot_check,
                "n_required": self.scenario.moon.n_required,
                "m_agree": self.scenario.moon.m_agree,
                "mode": mode.value,
            },
        )
        if self.scenario.boot_check == "fail":
            self._set_system_state(SystemState.SAFE_STATE)
        else:
            self._set_system_state(SystemState.NORMAL_PROCESSING)

    # -- one cycle -------------------------------------------------------------

    def step(self) -> None:
        if self.system_state is SystemState.BOOT:
            raise SimInternalError("step before boot")
        if self.system_state is SystemState.SAFE_STATE:
            raise SimInternalError("step after safe state")
        self.cycle += 1
        c = self.cycle

        # phase 1: scheduled fault activation, then seeded soak noise
        for target, detail in self.fault_engine.on_cycle_start(c, self.blocks):
            self.emit(1, target, "fault_applied", detail)
        for target, detail in self.fault_engine.stochastic_flips(
            c, self.blocks, self.rng, self.scenario.noise_flip_probability
        ):
            self.emit(1, target, "fault_applied", detail)

        # phase 2: scheduled external triggers
        for trig in self.scenario.triggers:
            if trig.cycle == c:
                self.emit(2, "system", "trigger", {"source": trig.source.value})
                self.request_queue.append(("external", trig.source))

        # phase 3: block ticks
        sync_arrivals: List[int] = []
        exit_arrivals: List[int] = []
        system_queue: List[Tuple[int, BusTransaction]] = []
        for b in self.blocks:
            response = self.mailbox.pop(b.block_id, None)
            out = b.tick(c, response)
            for target, detail in self.fault_engine.drain_events():
                self.emit(3, target, "fault_applied", detail)
            for old, new in out.state_changes:
                self.emit(3, b.block_id, "state_change", {"from": old.value, "to": new.value})
                if new is BlockState.HALTED:
                    self.emit(3, b.block_id, "halt", {})
            if out.trigger is not None:
                self.emit(3, b.block_id, "trigger", {"source": out.trigger.value})
                self.request_queue.append((b.block_id, out.trigger))
            if out.tx is None:
                continue
            tx, fault_events = self.fault_engine.filter_tx(b.block_id, out.tx, out.tx_role)
            for target, detail in fault_events:
                self.emit(3, target, "fault_applied", detail)
            if tx is None:
                continue  # suppressed on the wire; the block stays stalled
            if out.tx_role == "sync":
                self.emit(3, b.block_id, "sync_read", {"address": f"0x{tx.address:08X}"})
                sync_arrivals.append(b.block_id)
            elif out.tx_role == "exit":
                self.emit(3, b.block_id, "exit_read", {"address": f"0x{tx.address:08X}"})
                exit_arrivals.append(b.block_id)
            elif b.state is BlockState.SAFE_PROCESSING:
                self.held_tx[b.block_id] = tx  # voted-bus port holds it until served
            else:
                system_queue.append((b.block_id, tx))

        # phase 4: monitor rendezvous work
        self._phase_irq_delivery(c)
        self._phase_requests(c)
        self._phase_entry(c, sync_arrivals)
        self._phase_exit(c, exit_arrivals)

        # phase 5: bus commit
        self._phase_commit(c, system_queue)

        # phase 6: observer
        reason = self.monitor.observe(c)
        if reason is not None:
            self.counters["availability_errors"] += 1
            detail = {"reason": reason}
            if reason == "gather_timeout":
                detail["budget"] = self.scenario.moon.t_gather
            elif reason == "exec_timeout":
                detail["budget"] = self.scenario.moon.t_exec
            self.emit(6, "monitor", "availability_error", detail)
            if self.sessions and self.sessions[-1].outcome == "open":
                self.sessions[-1].outcome = reason
            self._flag_safe_state = True

        # phase 7: system transitions
        if self._flag_synchronizing:
            self._expect_state(SystemState.NORMAL_PROCESSING, "session request")
            self._set_system_state(SystemState.SYNCHRONIZING)
        if self._flag_lockstep:
            self._expect_state(SystemState.SYNCHRONIZING, "lockstep entry")
            self._set_system_state(SystemState.SAFE_PROCESSING_MODE)
        if self._flag_complete:
            self._expect_state(SystemState.SAFE_PROCESSING_MODE, "session completion")
            self._set_system_state(SystemState.NORMAL_PROCESSING)
        if self._flag_safe_state:
            self._set_system_state(SystemState.SAFE_STATE)
        self._flag_synchronizing = False
        self._flag_lockstep = False
        self._flag_complete = False
        self._flag_safe_state = False

    def _expect_state(self, expected: SystemState, what: str) -> None:
        if self.system_state is not expected:
            raise SimInternalError(
                f"{what} while system in {self.system_state.value} (cycle {self.cycle})"
            )

    # -- phase helpers ------------------------------------------------------

    def _phase_irq_delivery(self, c: int) -> None:
        due = sorted(b for cyc, b in self.pending_irq if cyc == c)
        self.pending_irq = [(cyc, b) for cyc, b in self.pending_irq if cyc != c]
        for b_id in due:
            self.blocks[b_id].raise_irq()

    def _phase_requests(self, c: int) -> None:
        for origin, source in self.request_queue:
            if self.monitor.request_sp(c):
                self.emit(4, "monitor", "state_change", {"from": "idle", "to": "gathering"})
                self.emit(
                    4, "monitor", "irq_assert", {"origin": origin, "source": source.value}
                )
                self.sessions.append(SessionRecord(gather_cycle=c))
                for b in self.blocks:
                    latency = self.scenario.latency(b.block_id)
                    if latency == 0:
                        b.raise_irq()
                    else:
                        self.pending_irq.append((c + latency, b.block_id))
                self._flag_synchronizing = True
            else:
                self.emit(
                    4,
                    "monitor",
                    "trigger",
                    {"origin": origin, "source": source.value, "ignored": "session_active"},
                )
        self.request_queue = []

    def _phase_entry(self, c: int, sync_arrivals: List[int]) -> None:
        for b_id in sync_arrivals:
            decision = self.monitor.on_sync_read(b_id, c)
            if decision == "rejected":
                if self.monitor.sync_state in (SyncState.LOCKSTEP, SyncState.RELEASING):
                    context = "session_running"
                else:
                    context = "no_session"
                self._reject(b_id, context)
        result = self.monitor.finalize_rendezvous(
            c, self.rng, self.scenario.flags.random_selection
        )
        if result is None:
            return
        for b_id in result.accepted:
            self.mailbox[b_id] = LockstepMonitor.ACCEPT
            self.emit(4, "monitor", "accept", {"block": b_id, "response": 1})
            self.counters["accepted"] += 1
        for b_id in result.rejected:
            self._reject(b_id, "surplus")
        self.emit(4, "monitor", "irq_deassert", {})
        self.emit(4, "monitor", "state_change", {"from": "gathering", "to": "lockstep"})
        if self.sessions:
            self.sessions[-1].lockstep_cycle = c
            self.sessions[-1].accepted = list(result.accepted)
        self._flag_lockstep = True

    def _reject(self, b_id: int, context: str) -> None:
        self.mailbox[b_id] = LockstepMonitor.REJECT
        self.emit(4, "monitor", "reject", {"block": b_id, "response": 0, "context": context})
        self.counters["rejected"] += 1
        if context != "exit_not_enabled" and self.sessions and self.sessions[-1].outcome == "open":
            self.sessions[-1].rejected.append(b_id)

    def _phase_exit(self, c: int, exit_arrivals: List[int]) -> None:
        for b_id in exit_arrivals:
            before = self.monitor.sync_state
            decision = self.monitor.on_exit_read(b_id, c)
            if decision == "rejected":
                self._reject(b_id, "exit_not_enabled")
            elif before is SyncState.LOCKSTEP and self.monitor.sync_state is SyncState.RELEASING:
                self.emit(4, "monitor", "state_change", {"from": "lockstep", "to": "releasing"})
        released = self.monitor.finalize_release(c)
        if released is None:
            return
        for b_id in released:
            self.mailbox[b_id] = LockstepMonitor.ACCEPT
        self.emit(4, "monitor", "release", {"blocks": released, "response": 1})
        self.emit(4, "monitor", "state_change", {"from": "releasing", "to": "idle"})
        self.held_tx.clear()
        if self.sessions:
            self.sessions[-1].release_cycle = c
            self.sessions[-1].outcome = "completed"
        self._flag_complete = True

    def _phase_commit(self, c: int, system_queue: List[Tuple[int, BusTransaction]]) -> None:
        for b_id, tx in system_queue:
            try:
                response = self.memory.issue(tx, voted=False)
            except UnmappedAddress as exc:
                raise UnmappedAddress(
                    exc.address, f"cycle {c}, block {b_id}: {exc.context}"
                ) from None
            self.mailbox[b_id] = response

        if self.monitor.frozen or self.monitor.sync_state not in (
            SyncState.LOCKSTEP,
            SyncState.RELEASING,
        ):
            return
        port_inputs: List[Tuple[int, Optional[BusTransaction]]] = []
        for b_id in self.monitor.enabled_ids():
            blk = self.blocks[b_id]
            if blk.state is BlockState.AWAITING_EXIT:
                port_inputs.append(
                    (b_id, BusTransaction(b_id, c, TxKind.READ, LOCKSTEP_SYNC_ADDRESS))
                )
            elif b_id in self.held_tx:
                port_inputs.append((b_id, self.held_tx[b_id]))
            else:
                port_inputs.append((b_id, None))
        if all(tx is None for _, tx in port_inputs):
            return  # unanimous idle cycle: not a fault, nothing to vote
        result = self.monitor.vote(port_inputs, c)
        self.emit(
            5,
            "monitor",
            "vote",
            {
                "ports": result.ports,
                "matrix": ["".join("1" if x else "0" for x in row) for row in result.matrix],
            },
        )
        if result.no_majority:
            self.counters["no_majority_cycles"] += 1
            self.emit(5, "monitor", "no_majority", {"ports": result.ports})
            return
        if result.disagreement:
            self.counters["masked_fault_cycles"] += 1
        if result.forwarded is None:
            return  # winning class is "no transaction": voted bus stays idle
        fwd = result.forwarded
        if fwd.address == LOCKSTEP_SYNC_ADDRESS:
            # exit reads win votes but stall at the monitor; release logic owns them
            self.emit(
                5,
                "monitor",
                "forward",
                {"block": result.selected_block, "tx": fwd.short(), "stalled": 1},
            )
            return
        try:
            response = self.memory.issue(fwd, voted=True)
        except UnmappedAddress as exc:
            raise UnmappedAddress(
                exc.address, f"cycle {c}, voted commit: {exc.context}"
            ) from None
        self.emit(
            5,
            "monitor",
            "forward",
            {"block": result.selected_block, "tx": fwd.short(), "response": response},
        )
        # shared-bus acknowledge: every live pending data transaction completes
        for b_id in self.monitor.enabled_ids():
            if self.blocks[b_id].state is BlockState.SAFE_PROCESSING and b_id in self.held_tx:
                self.mailbox[b_id] = response
                del self.held_tx[b_id]

    # -- whole runs -----------------------------------------------------------

    def all_halted(self) -> bool:
        return all(b.state is BlockState.HALTED for b in self.blocks)

    def quiescent(self) -> bool:
        """Nothing can ever happen again: all blocks halted, no session in
        flight, no scheduled trigger still to come (a request raised against
        halted blocks must still run into its gathering timeout)."""
        return (
            self.all_halted()
            and self.monitor.sync_state is SyncState.IDLE
            and all(t.cycle <= self.cycle for t in self.scenario.triggers)
        )

    def run(self, max_cycles: Optional[int] = None) -> None:
        limit = self.scenario.max_cycles if max_cycles is None else max_cycles
        if self.system_state is SystemState.BOOT:
            self.boot()
        if self.system_state is SystemState.SAFE_STATE:
            self.end_reason = "safe_state"
        else:
            self.end_reason = "max_cycles"
            while self.cycle < limit:
                self.step()
                if self.system_state is SystemState.SAFE_STATE:
                    self.end_reason = "safe_state"
                    break
                if self.quiescent():
                    self.end_reason = "all_halted"
                    break
        if self.sessions and self.sessions[-1].outcome == "open":
            self.sessions[-1].outcome = "incomplete"
        self.emit(7, "system", "halt", {"reason": self.end_reason})


@dataclass
class Report:
    """Run summary; the full trace rides along but serializes separately."""

    scenario_name: str
    effective_seed: int
    version: str
    scenario_hash: str
    boot_result: str
    final_state: str
    end_reason: str
    cycles_run: int
    sessions: List[Dict]
    sessions_completed: int
    accepted: int
    rejected: int
    masked_fault_cycles: int
    no_majority_cycles: int
    availability_errors: int
    ls_ram: Dict[int, int]
    io_log: List[int]
    memory_digest: str
    trace: List[TraceEvent] = field(repr=False, default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "scenario_name": self.scenario_name,
            "effective_seed": self.effective_seed,
            "version": self.version,
            "scenario_hash": self.scenario_hash,
            "boot_result": self.boot_result,
            "final_state": self.final_state,
            "end_reason": self.end_reason,
            "cycles_run": self.cycles_run,
            "sessions": self.sessions,
            "sessions_completed": self.sessions_completed,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "masked_fault_cycles": self.masked_fault_cycles,
            "no_majority_cycles": self.no_majority_cycles,
            "availability_errors": self.availability_errors,
            "ls_ram": {f"0x{addr:08X}": value for addr, value in sorted(self.ls_ram.items())},
            "io_log": list(self.io_log),
            "memory_digest": self.memory_digest,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def memory_digest(ls_ram: Dict[int, int], io_log: List[int]) -> str:
    canon = json.dumps(
        {"ls_ram": sorted(ls_ram.items()), "io_log": list(io_log)},
        separators=(",", ":"),
    )
    return hashlib.sha256(canon.encode("ascii")).hexdigest()


def boot(scenario: Scenario, seed: Optional[int] = None, trace_enabled: bool = True) -> World:
    """Construct and boot a world (structural validation included)."""
    world = World(scenario, seed=seed, trace_enabled=trace_enabled)
    world.boot()
    return world


def step(world: World) -> None:
    world.step()


def run(
    scenario: Scenario,
    seed: Optional[int] = None,
    max_cycles: Optional[int] = None,
    trace_enabled: bool = True,
) -> Report:
    """Run a scenario to completion and summarize."""
    world = World(scenario, seed=seed, trace_enabled=trace_enabled)
    world.run(max_cycles=max_cycles)
    completed = sum(1 for s in world.sessions if s.outcome == "completed")
    return Report(
        scenario_name=scenario.name,
        effective_seed=world.effective_seed,
        version=VERSION,
        scenario_hash=scenario_digest(scenario),
        boot_result=world.boot_result or "pass",
        final_state=world.system_state.value,
        end_reason=world.end_reason or "max_cycles",
        cycles_run=world.cycle,
        sessions=[s.to_dict() for s in world.sessions],
        sessions_completed=completed,
        accepted=world.counters["accepted"],
        rejected=world.counters["rejected"],
        masked_fault_cycles=world.counters["masked_fault_cycles"],
        no_majority_cycles=world.counters["no_majority_cycles"],
        availability_errors=world.counters["availability_errors"],
        ls_ram=dict(world.memory.ls_ram),
        io_log=list(world.memory.io_log),
        memory_digest=memory_digest(world.memory.ls_ram, world.memory.io_log),
        trace=world.trace,
    )
