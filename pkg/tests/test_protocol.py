import json
import random
from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stamp.engine import Action
from stamp.protocol import (
    HistoryGap,
    MalformedToolCall,
    MissingAction,
    MissingMemory,
    MissingThink,
    MissingToolCall,
    StepOutput,
    ToolAction,
    WrongOrder,
    assemble_prompt,
    compress_history,
    parse_step_output,
    render_step_output,
    windows,
)

VALID = """<think>
The code is on screen.
</think>
Action: Remember the code and go back.
Memory: code=1234
<tool_call>
{"name": "mobile_use", "arguments": {"action": "click", "coordinate": [500, 300]}}
</tool_call>"""


def _steps(n, memories=None):
    memories = memories or {}
    return [SimpleNamespace(index=i, action_desc=f"did {i}", memory=memories.get(i, ""),
                            output_text=f"out {i}", observation_text=f"screen {i}") for i in range(1, n + 1)]


def test_parse_valid():
    out = parse_step_output(VALID)
    assert out.memory == "code=1234" and out.action_desc == "Remember the code and go back."
    assert out.tool_call.action == "click" and out.tool_call.coordinate == (500, 300)
    assert out.think == "The code is on screen."


def test_memory_none_normalized():
    out = parse_step_output(VALID.replace("code=1234", "none"))
    assert out.memory == ""
    assert "Memory: none" in render_step_output(out)


def test_click_rendering_carries_coordinate():
    text = render_step_output(parse_step_output(VALID))
    body = json.loads(text.split("<tool_call>\n")[1].split("\n</tool_call>")[0])
    assert body == {"name": "mobile_use", "arguments": {"action": "click", "coordinate": [500, 300]}}
    assert text == VALID


@pytest.mark.parametrize("drop, err", [
    (lambda t: t.replace("<think>\nThe code is on screen.\n</think>\n", ""), MissingThink),
    (lambda t: t.replace("Action: Remember the code and go back.\n", ""), MissingAction),
    (lambda t: t.replace("Memory: code=1234\n", ""), MissingMemory),
    (lambda t: t.split("<tool_call>")[0], MissingToolCall),
])
def test_part_deletion_errors(drop, err):
    with pytest.raises(err) as info:
        parse_step_output(drop(VALID))
    assert type(info.value) is err and info.value.cause


def test_wrong_order_and_malformed():
    swapped = VALID.replace("Action: Remember the code and go back.\nMemory: code=1234",
                            "Memory: code=1234\nAction: Remember the code and go back.")
    with pytest.raises(WrongOrder):
        parse_step_output(swapped)
    with pytest.raises(MalformedToolCall):
        parse_step_output(VALID.replace('"coordinate": [500, 300]', '"coordinate": [500]'))
    with pytest.raises(MalformedToolCall):
        parse_step_output(VALID.replace('{"name"', '{name'))
    with pytest.raises(MalformedToolCall):
        parse_step_output(VALID.replace('"click"', '"fly"'))
    with pytest.raises(WrongOrder):
        parse_step_output(VALID + "\ntrailing")


_line = st.text(st.characters(blacklist_categories=("Cs", "Cc", "Zl", "Zp")), min_size=1, max_size=30).map(
    str.strip).filter(lambda s: s and s.lower() != "none" and not s.startswith(("<", "Action:", "Memory:")))
_coord = st.tuples(st.integers(0, 1000), st.integers(0, 1000))
_tools = st.one_of(
    st.builds(lambda c: ToolAction("click", coordinate=c), _coord),
    st.builds(lambda c, t: ToolAction("type", coordinate=c, text=t), _coord, _line),
    st.builds(lambda a, b: ToolAction("swipe", coordinate=a, coordinate2=b), _coord, _coord),
    st.builds(lambda b: ToolAction("system_button", button=b), st.sampled_from(["Back", "Home", "Enter"])),
    st.builds(lambda t: ToolAction("answer", text=t), _line),
    st.builds(lambda s: ToolAction("terminate", status=s), st.sampled_from(["success", "failure"])),
)


@settings(max_examples=300, deadline=None)
@given(_line, _line, st.one_of(st.just(""), _line), _tools)
def test_round_trip_property(think, desc, memory, tool):
    out = StepOutput(think, desc, memory, tool)
    text = render_step_output(out)
    again = parse_step_output(text)
    assert again == out and render_step_output(again) == text


def test_tool_mapping_to_engine():
    assert ToolAction("click", coordinate=[3, 4]).to_engine_action() == Action.click(3, 4)
    assert ToolAction("swipe", coordinate=(500, 700), coordinate2=(500, 100)).to_engine_action() == Action.scroll()
    assert ToolAction("swipe", coordinate=(500, 100), coordinate2=(500, 700)).to_engine_action().kind == "swipe"
    assert ToolAction("system_button", button="Back").to_engine_action() == Action.back()
    assert ToolAction("type", text="x").to_engine_action() == Action.type_focused("x")
    assert ToolAction("open", text="Mail").to_engine_action().kind == "open_app"
    assert ToolAction("answer", text="42").to_engine_action() == Action.answer("42")


@pytest.mark.parametrize("t, recent, early", [
    (1, (), ()), (3, (1, 2), ()), (7, (2, 3, 4, 5, 6), (1,)), (9, (4, 5, 6, 7, 8), (1, 2, 3)),
    (12, (7, 8, 9, 10, 11), (1, 2, 3, 4, 5, 6)),
])
def test_windows(t, recent, early):
    w = windows(t)
    assert w.recent == recent and w.early == early
    # brute-force oracle over the two-tier rule
    assert w.recent == tuple(i for i in range(1, t) if t - 5 <= i)
    assert w.early == tuple(i for i in range(1, t) if i < t - 5)


def test_windows_reject_nonpositive():
    with pytest.raises(ValueError):
        windows(0)


def test_compress_history():
    text = compress_history(_steps(3, {2: "x=1"}), 9)
    blocks = text.split("\n")
    assert blocks == ["Step 1: did 1", "Memory: none", "Step 2: did 2", "Memory: x=1", "Step 3: did 3",
                      "Memory: none"]
    assert compress_history(_steps(2), 3) == ""
    assert sum(line.startswith("Step ") for line in compress_history(_steps(11), 12).splitlines()) == 6
    with pytest.raises(HistoryGap):
        compress_history(_steps(2), 9)


@pytest.mark.parametrize("t, images, blocks", [(1, 1, 0), (3, 3, 0), (7, 5, 1), (9, 5, 3), (12, 5, 6)])
def test_assemble_prompt(t, images, blocks):
    p = assemble_prompt("Find the code", _steps(t - 1), t, "current screen")
    assert p.image_count == images == min(5, t)
    assert p.compressed_history.count("Step ") == blocks
    assert p.user_turns[-1].image_ref == "current screen" and p.user_turns[-1].step == t
    assert "Find the code" in p.user_turns[0].text
    assert len(p.assistant_turns) == len(p.user_turns) - 1
    msgs = p.to_messages()
    assert msgs[0]["role"] == "system" and msgs[-1]["role"] == "user"
    assert sum("<screenshot>" in m["content"] for m in msgs) == images


def test_random_round_trip_bulk():
    rng = random.Random(5)
    alphabet = "abcXYZ 0123=,.-_:;"
    for _ in range(1000):
        word = lambda: ("w" + "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 20)))).strip()
        tool = rng.choice([ToolAction("click", coordinate=(rng.randint(0, 1000), rng.randint(0, 1000))),
                           ToolAction("answer", text=word()), ToolAction("wait", time=rng.randint(1, 5))])
        out = StepOutput(word(), word(), rng.choice(["", word()]), tool)
        assert parse_step_output(render_step_output(out)) == out
