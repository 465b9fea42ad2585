#!/usr/bin/env python3
"""Outcome gallery for the bundled fault scenarios.

Runs six bundled scenarios that each exercise one corner of the fault
handling story — masking, stochastic soak, majority loss, rendezvous
starvation, a member that never leaves, and a failed self-check — and
prints a one-row summary plus the moral of each run.

Usage::

    python3 demos/fault_gallery.py
"""

from __future__ import annotations

from importlib import resources

from lockstepsim import load_scenario_file, run

GALLERY = [
    ("masking_2oo3", "a single corrupted port is outvoted and masked"),
    ("soak_noise", "random single-bit upsets keep being masked, cycle after cycle"),
    ("detect_divergent", "two divergent ports defeat a 2-of-3 majority"),
    ("timeout", "a block that never answers starves the rendezvous"),
    ("exit_timeout", "a member that never asks to leave trips the execution budget"),
    ("boot_fail", "a failed self-check goes straight to the safe state"),
]

COLUMNS = (
    ("scenario", 17),
    ("cycles", 6),
    ("sessions", 9),
    ("masked", 6),
    ("no-maj", 6),
    ("errors", 6),
    ("final state", 18),
)


def row(values) -> str:
    return "  ".join(str(v).ljust(w) for v, (_, w) in zip(values, COLUMNS))


def main() -> int:
    print(row(name for name, _ in COLUMNS))
    print(row("-" * w for _, w in COLUMNS))
    morals = []
    for name, moral in GALLERY:
        path = resources.files("lockstepsim") / "scenarios" / f"{name}.scn"
        report = run(load_scenario_file(str(path)))
        print(
            row(
                [
                    name,
                    report.cycles_run,
                    f"{len(report.sessions)}/{report.sessions_completed}",
                    report.masked_fault_cycles,
                    report.no_majority_cycles,
                    report.availability_errors,
                    report.final_state,
                ]
            )
        )
        morals.append((name, moral, report))
    print()
    for name, moral, report in morals:
        errors = [e for e in report.trace if e.kind == "availability_error"]
        tail = f" (error: {errors[0].detail['reason']})" if errors else ""
        print(f"{name}: {moral}{tail}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
