"""Scenario text format: parsing, validation errors with located field paths,
and the serialize/load round trip."""

from __future__ import annotations

from pathlib import Path

import pytest

from lockstepsim import (
    Compute,
    Halt,
    ParseError,
    Read,
    Scenario,
    ScenarioError,
    TriggerSource,
    TriggerSP,
    ValidationError,
    Write,
    load_scenario,
    load_scenario_file,
    parse_instruction,
    scenario_digest,
    serialize_scenario,
)
from lockstepsim.scenario import format_instruction, scenario_to_dict

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "src" / "lockstepsim" / "scenarios"

MINIMAL = """
name: minimal
seed: 0
n_blocks: 2
moon: {n_required: 2, m_agree: 2, t_gather: 5, t_exec: 5}
programs:
  - ["compute 1", "halt"]
  - ["compute 1", "halt"]
safe_program: ["write 0x10000 1"]
"""


def variant(**overrides) -> str:
    """MINIMAL with whole lines replaced or appended."""
    import yaml

    doc = yaml.safe_load(MINIMAL)
    doc.update(overrides)
    return yaml.safe_dump(doc)


# -- instruction strings --------------------------------------------------------------


@pytest.mark.parametrize(
    "text,instr",
    [
        ("compute 3", Compute(3)),
        ("read 0x10", Read(0x10)),
        ("read 16", Read(16)),
        ("write 0x10000 7", Write(0x10000, 7)),
        ("write 66 0xFF", Write(66, 255)),
        ("trigger_sp app_triggered", TriggerSP(TriggerSource.APP_TRIGGERED)),
        ("halt", Halt()),
    ],
)
def test_parse_instruction(text, instr):
    assert parse_instruction(text, "here") == instr


@pytest.mark.parametrize(
    "text",
    [
        "",
        "fly 1",
        "compute",
        "compute 1 2",
        "read",
        "read zz",
        "write 0x10",
        "trigger_sp nowhere",
        "halt 1",
    ],
)
def test_parse_instruction_rejects(text):
    with pytest.raises(ValidationError):
        parse_instruction(text, "here")


@pytest.mark.parametrize(
    "instr",
    [Compute(4), Read(0x10000), Write(0x20000, 99), TriggerSP(TriggerSource.APP_TIMED), Halt()],
)
def test_instruction_text_round_trip(instr):
    assert parse_instruction(format_instruction(instr), "rt") == instr


# -- parse errors -----------------------------------------------------------------------


def test_empty_file_is_a_parse_error_at_line_one():
    with pytest.raises(ParseError) as exc:
        load_scenario("")
    assert exc.value.line == 1


def test_non_mapping_document_rejected():
    with pytest.raises(ParseError):
        load_scenario("- 1\n- 2\n")


def test_yaml_syntax_error_carries_location():
    with pytest.raises(ParseError) as exc:
        load_scenario("name: [unclosed\nseed: 1\n")
    assert exc.value.line >= 1
    assert "line" in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario_file(str(tmp_path / "nope.scn"))


# -- field validation ---------------------------------------------------------------------


def test_minimal_scenario_loads():
    s = load_scenario(MINIMAL)
    assert s.n_blocks == 2
    assert s.moon.n_required == 2
    assert s.boot_check == "pass"
    assert s.max_cycles == 1000  # default
    assert s.noise_flip_probability == 0.0


@pytest.mark.parametrize(
    "text,path_fragment",
    [
        (variant(extra_field=1), "extra_field"),
        (variant(name=""), "name"),
        (variant(seed=-1), "seed"),
        (variant(seed="one"), "seed"),
        (variant(n_blocks=1), "n_blocks"),  # below n_required
        (variant(boot_check="maybe"), "boot_check"),
        (variant(max_cycles=0), "max_cycles"),
        (variant(moon={"n_required": 2, "m_agree": 2, "t_gather": 5}), "t_exec"),
        (variant(moon={"n_required": 2, "m_agree": 2, "t_gather": 5, "t_exec": 5, "x": 1}), "moon.x"),
        (variant(moon={"n_required": 4, "m_agree": 3, "t_gather": 5, "t_exec": 5}), "moon"),
        (variant(programs=[["compute 1", "halt"]]), "programs"),  # one per block
        (variant(programs="oops"), "programs"),
        (variant(programs=[["compute 0", "halt"], ["halt"]]), "programs[0][0]"),
        (variant(safe_program=["halt"]), "safe_program[0]"),
        (variant(safe_program=["trigger_sp app_timed"]), "safe_program[0]"),
        (variant(flags={"unknown": True}), "flags.unknown"),
        (variant(irq_latency=[0]), "irq_latency"),
        (variant(irq_latency=[0, -1]), "irq_latency"),
        (variant(irq_latency="zero"), "irq_latency"),
        (variant(noise={"flip_probability": 1.5}), "noise.flip_probability"),
        (variant(noise={"flip_probability": True}), "noise.flip_probability"),
        (variant(noise={"prob": 0.1}), "noise.prob"),
        (variant(triggers=[{"cycle": 0, "source": "external_in_scope"}]), "triggers[0]"),
        (variant(triggers=[{"cycle": 5, "source": "app_triggered"}]), "triggers[0]"),
        (variant(triggers=[{"cycle": 5, "source": "martian"}]), "triggers[0]"),
    ],
)
def test_validation_errors_name_the_field(text, path_fragment):
    with pytest.raises(ValidationError) as exc:
        load_scenario(text)
    assert path_fragment in str(exc.value)


def test_n_blocks_below_n_required_names_n_blocks():
    text = variant(
        n_blocks=2,
        moon={"n_required": 3, "m_agree": 2, "t_gather": 5, "t_exec": 5},
        programs=[["halt"], ["halt"]],
    )
    with pytest.raises(ValidationError) as exc:
        load_scenario(text)
    assert exc.value.field_path == "n_blocks"


# -- program region rules ------------------------------------------------------------------


def test_normal_programs_stay_in_system_ram():
    with pytest.raises(ValidationError) as exc:
        load_scenario(variant(programs=[["read 0x10000", "halt"], ["halt"]]))
    assert "programs[0][0]" in str(exc.value)
    with pytest.raises(ValidationError):
        load_scenario(variant(programs=[["write 0x20000 1", "halt"], ["halt"]]))


def test_safe_program_region_rules():
    load_scenario(variant(safe_program=["write 0x20000 1", "read 0x1FFFF"]))  # fine
    with pytest.raises(ValidationError):
        load_scenario(variant(safe_program=["read 0x100"]))  # system RAM read
    with pytest.raises(ValidationError):
        load_scenario(variant(safe_program=["read 0x20000"]))  # output device read
    with pytest.raises(ValidationError):
        load_scenario(variant(safe_program=["write 0x100 1"]))  # system RAM write


def test_external_trigger_sources_rejected_inside_programs():
    with pytest.raises(ValidationError):
        load_scenario(variant(programs=[["trigger_sp external_in_scope", "halt"], ["halt"]]))


# -- fault validation -------------------------------------------------------------------------


def fault_variant(fault):
    return variant(faults=[fault])


@pytest.mark.parametrize(
    "fault,fragment",
    [
        ({"target": 9, "kind": "no_show", "at_cycle": 1}, "target"),
        ({"target": 0, "kind": "sneeze", "at_cycle": 1}, "kind"),
        ({"target": 0, "kind": "no_show"}, "faults[0]"),  # no window
        ({"target": 0, "kind": "no_show", "at_cycle": 1, "at_safe_instr": 0}, "faults[0]"),
        ({"target": 0, "kind": "no_show", "at_safe_instr": 0}, "at_safe_instr"),
        ({"target": 0, "kind": "bit_flip_data", "at_cycle": 1}, "bit"),
        ({"target": 0, "kind": "bit_flip_data", "at_cycle": 1, "bit": 32}, "bit"),
        ({"target": 0, "kind": "no_show", "at_cycle": 1, "bit": 3}, "bit"),
        ({"target": 0, "kind": "start_jitter", "at_cycle": 1}, "delay"),
        ({"target": 0, "kind": "start_jitter", "at_cycle": 1, "delay": 0}, "delay"),
        ({"target": 0, "kind": "no_show", "at_cycle": 1, "delay": 2}, "delay"),
        ({"target": 0, "kind": "divergent_program", "at_cycle": 1}, "program"),
        ({"target": 0, "kind": "stuck_silent", "at_cycle": 1, "program": ["halt"]}, "program"),
        (
            {"target": 0, "kind": "divergent_program", "at_cycle": 1, "program": ["halt"]},
            "program[0]",
        ),
        ({"target": 0, "kind": "bit_flip_data", "at_safe_instr": 5, "bit": 1}, "at_safe_instr"),
        ({"target": 0, "kind": "bit_flip_data", "at_cycle": 1, "bit": 1, "zz": 1}, "zz"),
    ],
)
def test_fault_validation(fault, fragment):
    with pytest.raises(ValidationError) as exc:
        load_scenario(fault_variant(fault))
    assert fragment in str(exc.value)


def test_valid_fault_catalogue_loads():
    faults = [
        {"target": 0, "kind": "bit_flip_data", "at_safe_instr": 0, "bit": 31},
        {"target": 1, "kind": "bit_flip_address", "at_cycle": 4, "bit": 0},
        {"target": 0, "kind": "stuck_silent", "at_safe_instr": 0},
        {"target": 1, "kind": "no_show", "at_cycle": 0},
        {"target": 0, "kind": "start_jitter", "at_cycle": 2, "delay": 3},
        {
            "target": 1,
            "kind": "divergent_program",
            "at_safe_instr": 0,
            "program": ["write 0x10000 2"],
        },
    ]
    s = load_scenario(variant(faults=faults))
    assert len(s.faults) == 6


# -- round trip and digest ----------------------------------------------------------------------


def bundled(name):
    return load_scenario_file(str(SCENARIO_DIR / name))


@pytest.mark.parametrize(
    "name",
    [
        "fig5.scn",
        "timeout.scn",
        "masking_2oo3.scn",
        "detect_divergent.scn",
        "boot_fail.scn",
        "exit_timeout.scn",
        "random_tiebreak.scn",
        "rendezvous.scn",
        "soak_noise.scn",
    ],
)
def test_bundled_scenarios_round_trip(name):
    original = bundled(name)
    reloaded = load_scenario(serialize_scenario(original))
    assert scenario_to_dict(reloaded) == scenario_to_dict(original)
    assert scenario_digest(reloaded) == scenario_digest(original)


def test_digest_changes_with_content():
    a = load_scenario(MINIMAL)
    b = load_scenario(variant(seed=1))
    assert scenario_digest(a) != scenario_digest(b)


def test_noise_field_round_trips():
    s = load_scenario(variant(noise={"flip_probability": 0.25}))
    assert s.noise_flip_probability == 0.25
    again = load_scenario(serialize_scenario(s))
    assert again.noise_flip_probability == 0.25


def test_fig5_shape():
    s = bundled("fig5.scn")
    assert s.n_blocks == 3
    assert (s.moon.n_required, s.moon.m_agree) == (2, 2)
