"""Fault engine unit behavior plus two whole-world integration checks."""

from __future__ import annotations

import random

import pytest

from lockstepsim import (
    BusTransaction,
    Compute,
    FaultEngine,
    FaultKind,
    FaultSpec,
    Halt,
    MoonConfig,
    ProcessingBlock,
    Read,
    Scenario,
    TriggerSource,
    TriggerSP,
    TxKind,
    Write,
    run,
)

SAFE = [Write(0x10000, 7), Read(0x10000)]


def make_blocks(n=2):
    return [
        ProcessingBlock(i, [Compute(8), Halt()], SAFE) for i in range(n)
    ]


def data_tx(data=7, address=0x10000, block=0):
    return BusTransaction(block, 1, TxKind.WRITE, address, data)


# -- activation windows -----------------------------------------------------------


def test_cycle_window_activates_at_its_cycle():
    eng = FaultEngine([FaultSpec(target=0, kind=FaultKind.NO_SHOW, at_cycle=3)])
    blocks = make_blocks()
    assert eng.on_cycle_start(2, blocks) == []
    events = eng.on_cycle_start(3, blocks)
    assert events == [(0, {"fault": "no_show", "window": "cycle"})]
    assert blocks[0].ignore_irq
    assert not blocks[1].ignore_irq
    assert eng.on_cycle_start(4, blocks) == []  # one-shot


def test_start_jitter_sets_the_delay_knob():
    eng = FaultEngine(
        [FaultSpec(target=1, kind=FaultKind.START_JITTER, at_cycle=1, delay=4)]
    )
    blocks = make_blocks()
    events = eng.on_cycle_start(1, blocks)
    assert blocks[1].sync_delay == 4
    assert events[0][1]["delay"] == 4


def test_stuck_silent_suppresses_every_later_tx():
    eng = FaultEngine([FaultSpec(target=0, kind=FaultKind.STUCK_SILENT, at_cycle=1)])
    blocks = make_blocks()
    eng.on_cycle_start(1, blocks)
    tx, events = eng.filter_tx(0, data_tx(), "data")
    assert tx is None and events == []
    tx, _ = eng.filter_tx(0, data_tx(), "sync")
    assert tx is None  # silence covers protocol reads too
    tx, _ = eng.filter_tx(1, data_tx(block=1), "data")
    assert tx is not None  # other blocks unaffected


def test_instruction_window_activates_via_fetch_hook():
    eng = FaultEngine(
        [FaultSpec(target=0, kind=FaultKind.BIT_FLIP_DATA, at_safe_instr=1, bit=2)]
    )
    blocks = make_blocks()
    hook = eng.make_hook(0)
    hook(blocks[0], 0)
    assert eng.drain_events() == []  # wrong index: not yet
    hook(blocks[0], 1)
    events = eng.drain_events()
    assert events[0][1]["window"] == "safe_instr"
    tx, flip_events = eng.filter_tx(0, data_tx(7), "data")
    assert tx.data == 7 ^ 4
    assert flip_events[0][1]["before"] != flip_events[0][1]["after"]


# -- bit flips -----------------------------------------------------------------------


def test_data_flip_is_single_shot():
    eng = FaultEngine(
        [FaultSpec(target=0, kind=FaultKind.BIT_FLIP_DATA, at_cycle=1, bit=0)]
    )
    blocks = make_blocks()
    eng.on_cycle_start(1, blocks)
    tx, _ = eng.filter_tx(0, data_tx(6), "data")
    assert tx.data == 7
    tx, events = eng.filter_tx(0, data_tx(6), "data")
    assert tx.data == 6 and events == []  # consumed


def test_address_flip_touches_the_address_word():
    eng = FaultEngine(
        [FaultSpec(target=0, kind=FaultKind.BIT_FLIP_ADDRESS, at_cycle=1, bit=3)]
    )
    blocks = make_blocks()
    eng.on_cycle_start(1, blocks)
    tx, _ = eng.filter_tx(0, data_tx(7, address=0x10000), "data")
    assert tx.address == 0x10008
    assert tx.data == 7


def test_flips_never_touch_protocol_reads():
    eng = FaultEngine(
        [FaultSpec(target=0, kind=FaultKind.BIT_FLIP_DATA, at_cycle=1, bit=0)]
    )
    blocks = make_blocks()
    eng.on_cycle_start(1, blocks)
    sync = BusTransaction(0, 1, TxKind.READ, 0xFFFF0000)
    tx, events = eng.filter_tx(0, sync, "sync")
    assert tx is sync and events == []
    # the flip stays armed for the next data transaction
    tx, _ = eng.filter_tx(0, data_tx(6), "data")
    assert tx.data == 7


def test_two_armed_flips_stack_on_one_transaction():
    eng = FaultEngine(
        [
            FaultSpec(target=0, kind=FaultKind.BIT_FLIP_DATA, at_cycle=1, bit=0),
            FaultSpec(target=0, kind=FaultKind.BIT_FLIP_DATA, at_cycle=1, bit=1),
        ]
    )
    blocks = make_blocks()
    eng.on_cycle_start(1, blocks)
    tx, events = eng.filter_tx(0, data_tx(0), "data")
    assert tx.data == 3
    assert len(events) == 2


# -- divergent program -----------------------------------------------------------------


def test_divergent_at_instruction_swaps_remaining_stream():
    alt = (Write(0x10004, 9),)
    eng = FaultEngine(
        [
            FaultSpec(
                target=0, kind=FaultKind.DIVERGENT_PROGRAM, at_safe_instr=1, program=alt
            )
        ]
    )
    blocks = make_blocks()
    hook = eng.make_hook(0)
    hook(blocks[0], 1)
    assert blocks[0].safe_override == (1, list(alt))


def test_divergent_at_cycle_defers_to_next_fetch():
    alt = (Write(0x10004, 9),)
    eng = FaultEngine(
        [FaultSpec(target=0, kind=FaultKind.DIVERGENT_PROGRAM, at_cycle=1, program=alt)]
    )
    blocks = make_blocks()
    events = eng.on_cycle_start(1, blocks)
    assert events[0][1].get("deferred") == 1
    assert blocks[0].safe_override is None
    hook = eng.make_hook(0)
    hook(blocks[0], 0)
    assert blocks[0].safe_override == (0, list(alt))
    assert eng.drain_events()[0][1]["applied_at"] == 0


# -- stochastic soak mode -----------------------------------------------------------------


def test_stochastic_flips_off_by_default():
    eng = FaultEngine([])
    blocks = make_blocks()
    assert eng.stochastic_flips(1, blocks, random.Random(0), 0.0) == []


def test_stochastic_flips_deterministic_per_seed():
    def roll(seed):
        eng = FaultEngine([])
        blocks = make_blocks(4)
        out = []
        rng = random.Random(seed)
        for c in range(1, 20):
            out.extend(eng.stochastic_flips(c, blocks, rng, 0.3))
            for b in blocks:
                eng.filter_tx(b.block_id, data_tx(block=b.block_id), "data")
        return out

    assert roll(7) == roll(7)
    assert roll(7) != roll(8)


def test_stochastic_flip_arms_at_most_one_per_block():
    eng = FaultEngine([])
    blocks = make_blocks(1)
    rng = random.Random(1)
    for c in range(1, 50):
        eng.stochastic_flips(c, blocks, rng, 1.0)  # always trying
        assert len(eng._armed_flips[0]) == 1  # still only one pending
    tx, events = eng.filter_tx(0, data_tx(0), "data")
    assert len(events) == 1  # exactly one upset applied


def test_stochastic_flips_skip_halted_blocks():
    eng = FaultEngine([])
    blocks = make_blocks(2)
    blocks[0].state = blocks[0].state.HALTED
    events = eng.stochastic_flips(1, blocks, random.Random(0), 1.0)
    assert [target for target, _ in events] == [1]


# -- whole-world integration ---------------------------------------------------------------


def _group_scenario(n_blocks, n, m, faults, t_gather=6):
    programs = [[Compute(1), TriggerSP(TriggerSource.APP_TRIGGERED)]
                + [Compute(1)] * 10 + [Halt()]]
    programs += [[Compute(1)] * 12 + [Halt()] for _ in range(n_blocks - 1)]
    return Scenario(
        name="fault-integration",
        seed=0,
        n_blocks=n_blocks,
        moon=MoonConfig(n_required=n, m_agree=m, t_gather=t_gather, t_exec=12),
        boot_check="pass",
        programs=programs,
        safe_program=SAFE,
        faults=faults,
        max_cycles=50,
    )


def test_two_no_shows_starve_the_rendezvous():
    faults = [
        FaultSpec(target=1, kind=FaultKind.NO_SHOW, at_cycle=1),
        FaultSpec(target=2, kind=FaultKind.NO_SHOW, at_cycle=1),
    ]
    report = run(_group_scenario(3, 3, 2, faults))
    assert report.final_state == "safe_state"
    assert report.availability_errors == 1
    errors = [e for e in report.trace if e.kind == "availability_error"]
    assert errors[0].detail["reason"] == "gather_timeout"


def test_single_flip_is_masked_in_2oo3():
    faults = [
        FaultSpec(target=2, kind=FaultKind.BIT_FLIP_DATA, at_safe_instr=0, bit=1)
    ]
    clean = run(_group_scenario(3, 3, 2, []))
    faulty = run(_group_scenario(3, 3, 2, faults))
    assert faulty.ls_ram == clean.ls_ram
    assert faulty.io_log == clean.io_log
    assert faulty.masked_fault_cycles >= 1
    assert faulty.final_state == "normal_processing"
