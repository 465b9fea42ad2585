"""Deterministic fault injection.

Faults perturb a block's outward behaviour only - emitted transactions, IRQ
reaction, sync-read timing or its copy of the safe instruction stream.  The
voter, the lockstep RAM and the trace writer are never touched, so masking
and detection outcomes are attributable to the architecture, not the harness.

Activation windows are either an absolute cycle or "when the target is about
to execute the k-th safe-program instruction".  Bit flips are single upsets:
armed by their window, consumed by the next data transaction, then done.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .block import BlockState, Instruction, ProcessingBlock
from .bus import BusTransaction


class FaultKind(Enum):
    BIT_FLIP_DATA = "bit_flip_data"
    BIT_FLIP_ADDRESS = "bit_flip_address"
    DIVERGENT_PROGRAM = "divergent_program"
    STUCK_SILENT = "stuck_silent"
    NO_SHOW = "no_show"
    START_JITTER = "start_jitter"


# kinds whose window may name a safe-program instruction
INSTRUCTION_WINDOW_KINDS = frozenset(
    {
        FaultKind.BIT_FLIP_DATA,
        FaultKind.BIT_FLIP_ADDRESS,
        FaultKind.DIVERGENT_PROGRAM,
        FaultKind.STUCK_SILENT,
    }
)


@dataclass(frozen=True)
class FaultSpec:
    """One scheduled fault.  Exactly one of at_cycle / at_safe_instr is set."""

    target: int
    kind: FaultKind
    at_cycle: Optional[int] = None
    at_safe_instr: Optional[int] = None
    bit: Optional[int] = None
    delay: Optional[int] = None
    program: Optional[Tuple[Instruction, ...]] = None


@dataclass
class _FaultState:
    spec: FaultSpec
    index: int
    done: bool = False


class FaultEngine:
    """Holds all fault state for one world and exposes the three hook points
    the engine drives: cycle-start activation, safe-instruction-fetch
    activation, and outgoing-transaction filtering."""

    def __init__(self, specs: List[FaultSpec]):
        self.states = [_FaultState(spec=s, index=i) for i, s in enumerate(specs)]
        self.suppressed: set = set()
        self._armed_flips: Dict[int, List[_FaultState]] = {}
        self._pending_divergent: Dict[int, _FaultState] = {}
        self.pending_events: List[Tuple[int, dict]] = []  # (target, detail)

    # -- activation ----------------------------------------------------------

    def _activate(self, st: _FaultState, block: ProcessingBlock, via: str, safe_idx=None):
        spec = st.spec
        st.done = True
        detail = {"fault": spec.kind.value, "window": via}
        if spec.kind is FaultKind.NO_SHOW:
            block.ignore_irq = True
        elif spec.kind is FaultKind.START_JITTER:
            block.sync_delay = spec.delay or 1
            detail["delay"] = block.sync_delay
        elif spec.kind is FaultKind.STUCK_SILENT:
            self.suppressed.add(block.block_id)
        elif spec.kind is FaultKind.DIVERGENT_PROGRAM:
            if safe_idx is None:
                # cycle-windowed: take effect at the next safe fetch
                self._pending_divergent[block.block_id] = st
                detail["deferred"] = 1
            else:
                block.safe_override = (safe_idx, list(spec.program or ()))
                detail["at_safe_instr"] = safe_idx
        else:  # bit flips: arm for the next data transaction
            st.done = False
            self._armed_flips.setdefault(block.block_id, []).append(st)
            detail["bit"] = spec.bit
        self.pending_events.append((block.block_id, detail))

    def on_cycle_start(self, cycle: int, blocks: List[ProcessingBlock]) -> List[Tuple[int, dict]]:
        """Activate every cycle-windowed fault whose time has come.  Returns
        (target, detail) pairs ordered by target id for the trace."""
        due = [
            st
            for st in self.states
            if not st.done
            and st.spec.at_cycle is not None
            and cycle >= st.spec.at_cycle
            and not self._is_armed(st)
        ]
        due.sort(key=lambda st: (st.spec.target, st.index))
        for st in due:
            self._activate(st, blocks[st.spec.target], via="cycle")
        events, self.pending_events = self.pending_events, []
        return events

    def _is_armed(self, st: _FaultState) -> bool:
        for lst in self._armed_flips.values():
            if st in lst:
                return True
        return False

    def make_hook(self, block_id: int):
        """Fetch-time hook for instruction-windowed activation, installed on
        each block; fires just before the k-th safe instruction executes."""

        def hook(block: ProcessingBlock, safe_idx: int):
            pending = self._pending_divergent.pop(block.block_id, None)
            if pending is not None:
                block.safe_override = (safe_idx, list(pending.spec.program or ()))
                self.pending_events.append(
                    (block.block_id, {"fault": pending.spec.kind.value, "window": "cycle", "applied_at": safe_idx})
                )
            for st in self.states:
                if (
                    not st.done
                    and st.spec.target == block.block_id
                    and st.spec.at_safe_instr == safe_idx
                    and not self._is_armed(st)
                ):
                    self._activate(st, block, via="safe_instr", safe_idx=safe_idx)

        return hook

    # -- transaction filtering -------------------------------------------------

    def filter_tx(
        self, block_id: int, tx: BusTransaction, role: str
    ) -> Tuple[Optional[BusTransaction], List[Tuple[int, dict]]]:
        """Apply suppression and armed single-upset flips to one outgoing
        transaction.  Flips touch data transactions only; the rendezvous and
        release reads are protocol, not voted payload."""
        events: List[Tuple[int, dict]] = []
        if block_id in self.suppressed:
            return None, events
        armed = self._armed_flips.get(block_id)
        if armed and role == "data":
            for st in list(armed):
                spec = st.spec
                before = tx.short()
                if spec.kind is FaultKind.BIT_FLIP_DATA:
                    tx = BusTransaction(
                        tx.block_id, tx.cycle, tx.kind, tx.address, tx.data ^ (1 << spec.bit)
                    )
                else:
                    tx = BusTransaction(
                        tx.block_id, tx.cycle, tx.kind, tx.address ^ (1 << spec.bit), tx.data
                    )
                st.done = True
                armed.remove(st)
                events.append(
                    (
                        block_id,
                        {
                            "fault": spec.kind.value,
                            "bit": spec.bit,
                            "before": before,
                            "after": tx.short(),
                        },
                    )
                )
        return tx, events

    def drain_events(self) -> List[Tuple[int, dict]]:
        events, self.pending_events = self.pending_events, []
        return events

    def stochastic_flips(
        self,
        cycle: int,
        blocks: List[ProcessingBlock],
        rng: random.Random,
        probability: float,
    ) -> List[Tuple[int, dict]]:
        """Seeded soak mode: each live block has the given per-cycle chance
        of a single random data-bit upset on its next data transaction.  At
        most one stochastic flip is pending per block at a time."""
        events: List[Tuple[int, dict]] = []
        if probability <= 0.0:
            return events
        for block in blocks:
            if block.state is BlockState.HALTED:
                continue
            if rng.random() >= probability:
                continue
            if self._armed_flips.get(block.block_id):
                continue
            bit = rng.randrange(32)
            spec = FaultSpec(
                target=block.block_id,
                kind=FaultKind.BIT_FLIP_DATA,
                at_cycle=cycle,
                bit=bit,
            )
            self._armed_flips.setdefault(block.block_id, []).append(
                _FaultState(spec=spec, index=-1)
            )
            events.append(
                (block.block_id, {"fault": spec.kind.value, "window": "stochastic", "bit": bit})
            )
        return events
