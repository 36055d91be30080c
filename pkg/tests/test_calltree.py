import json

import pytest

from freqtune import (
    CallTree,
    CallTreeError,
    MismatchedExit,
    RegionEvent,
    apply_event,
    candidate_nodes,
    function_children,
    is_tuning_candidate,
    node_from_dict,
    node_to_dict,
    read_events_jsonl,
    replay,
    rts_path,
)


def run_events(*events):
    return replay(RegionEvent(*ev) for ev in events)


def test_first_region_must_be_main():
    tree = CallTree()
    with pytest.raises(CallTreeError):
        tree.enter_region("solve", 0.0)


def test_mismatched_exit():
    tree = CallTree()
    tree.enter_region("main", 0.0)
    tree.enter_region("a", 0.0)
    with pytest.raises(MismatchedExit):
        tree.exit_region("main", 1.0)
    tree.exit_region("a", 1.0)
    tree.exit_region("main", 2.0)
    with pytest.raises(MismatchedExit):
        tree.exit_region("main", 3.0)


def test_nesting_counts_and_inclusive_time():
    tree = CallTree()
    tree.enter_region("main", 0.0)
    for k in range(3):
        t = 100.0 * k
        tree.enter_region("a", t)
        tree.enter_region("b", t + 10.0)
        tree.exit_region("b", t + 40.0)
        tree.exit_region("a", t + 90.0)
    tree.exit_region("main", 300.0)

    a = tree.root.children[("function", "a", None)]
    b = a.children[("function", "b", None)]
    assert a.call_count == 3 and b.call_count == 3
    assert a.total_time_ms == pytest.approx(270.0)  # inclusive of b
    assert b.total_time_ms == pytest.approx(90.0)
    assert tree.root.total_time_ms == pytest.approx(300.0)
    assert tree.depth == 0


def test_parameter_values_split_into_siblings():
    tree = CallTree()
    tree.enter_region("main", 0.0)
    tree.enter_region("solve", 0.0)
    tree.set_parameter("n", 1024)
    tree.enter_region("kernel", 0.0)
    tree.exit_region("kernel", 150.0)
    tree.exit_region("solve", 150.0)
    tree.enter_region("solve", 150.0)
    tree.set_parameter("n", 2048)
    tree.enter_region("kernel", 150.0)
    tree.exit_region("kernel", 450.0)
    tree.exit_region("solve", 450.0)
    tree.exit_region("main", 450.0)

    solve = tree.root.children[("function", "solve", None)]
    assert set(solve.children) == {("parameter", "n", 1024), ("parameter", "n", 2048)}
    kernels = list(function_children(solve))
    assert [k.total_time_ms for k in kernels] == [150.0, 300.0]
    assert str(rts_path(kernels[0])) == "main/solve/n=1024/kernel"
    assert str(rts_path(kernels[1])) == "main/solve/n=2048/kernel"


def test_parameter_reset_replaces_value_in_frame():
    tree = CallTree()
    tree.enter_region("main", 0.0)
    tree.enter_region("solve", 0.0)
    tree.set_parameter("n", 1)
    tree.set_parameter("n", 2)
    node = tree.enter_region("kernel", 0.0)
    assert str(rts_path(node)) == "main/solve/n=2/kernel"
    tree.exit_region("kernel", 10.0)
    tree.exit_region("solve", 10.0)
    tree.exit_region("main", 10.0)


def test_two_parameters_stack_in_set_order():
    tree = CallTree()
    tree.enter_region("main", 0.0)
    tree.set_parameter("b", 2)
    tree.set_parameter("a", 1)
    node = tree.enter_region("leaf", 0.0)
    assert str(rts_path(node)) == "main/b=2/a=1/leaf"


def test_set_parameter_outside_region_fails():
    with pytest.raises(CallTreeError):
        CallTree().set_parameter("n", 1)


def test_rts_string_escapes_separators():
    tree = CallTree()
    tree.enter_region("main", 0.0)
    tree.set_parameter("path=x", "a/b")
    node = tree.enter_region("re/gion", 0.0)
    s = str(rts_path(node))
    assert s == "main/path\\=x=a\\/b/re\\/gion"


def test_candidate_leaf_threshold_strict():
    at = run_events(("enter", "main"), ("enter", "leaf"), ("exit", "leaf", None, 100.0),
                    ("exit", "main", None, 100.0))
    leaf = at.root.children[("function", "leaf", None)]
    assert not is_tuning_candidate(leaf)  # mean exactly at the threshold

    above = run_events(("enter", "main"), ("enter", "leaf"), ("exit", "leaf", None, 100.5),
                       ("exit", "main", None, 100.5))
    assert is_tuning_candidate(above.root.children[("function", "leaf", None)])


def test_candidate_internal_short_versus_long():
    # parent split between one long child (400) and short ones (150): not a candidate
    tree = CallTree()
    tree.enter_region("main", 0.0)
    tree.enter_region("parent", 0.0)
    tree.enter_region("long", 0.0)
    tree.exit_region("long", 400.0)
    for k in range(3):
        tree.enter_region("short", 400.0 + 50.0 * k)
        tree.exit_region("short", 450.0 + 50.0 * k)
    tree.exit_region("parent", 600.0)
    tree.exit_region("main", 600.0)

    parent = tree.root.children[("function", "parent", None)]
    assert not is_tuning_candidate(parent)
    # the long child picks it up instead
    assert is_tuning_candidate(parent.children[("function", "long", None)])

    # without the long child the short work dominates and the parent qualifies
    tree2 = CallTree()
    tree2.enter_region("main", 0.0)
    tree2.enter_region("parent", 0.0)
    for k in range(3):
        tree2.enter_region("short", 50.0 * k)
        tree2.exit_region("short", 50.0 * k + 50.0)
    tree2.exit_region("parent", 200.0)
    tree2.exit_region("main", 200.0)
    assert is_tuning_candidate(tree2.root.children[("function", "parent", None)])


def test_candidate_counts_children_through_parameters():
    tree = CallTree()
    tree.enter_region("main", 0.0)
    tree.enter_region("solve", 0.0)
    tree.set_parameter("n", 7)
    tree.enter_region("kernel", 0.0)
    tree.exit_region("kernel", 400.0)
    tree.exit_region("solve", 410.0)
    tree.exit_region("main", 410.0)
    solve = tree.root.children[("function", "solve", None)]
    # the 400 ms kernel behind the parameter node counts as a long child
    assert not is_tuning_candidate(solve)


def test_candidate_ignores_uncalled_and_parameter_nodes():
    tree = CallTree()
    tree.enter_region("main", 0.0)
    node = tree.set_parameter("x", 1)
    assert not is_tuning_candidate(node)
    tree.exit_region("main", 500.0)
    fresh = tree.root.child("function", "never")
    assert fresh.call_count == 0
    assert not is_tuning_candidate(fresh)


def test_candidate_nodes_scans_whole_tree():
    tree = run_events(
        ("enter", "main"),
        ("enter", "fast"), ("exit", "fast", None, 10.0),
        ("enter", "slow", None, 10.0), ("exit", "slow", None, 310.0),
        ("exit", "main", None, 310.0),
    )
    names = {n.name for n in candidate_nodes(tree)}
    assert names == {"slow"}


def test_events_jsonl_round_trip(tmp_path):
    events = [
        {"kind": "enter", "name": "main", "t_ms": 0.0},
        {"kind": "enter", "name": "step", "t_ms": 0.0},
        {"kind": "parameter", "name": "size", "value": 4},
        {"kind": "enter", "name": "inner", "t_ms": 5.0},
        {"kind": "exit", "name": "inner", "t_ms": 205.0},
        {"kind": "exit", "name": "step", "t_ms": 210.0},
        {"kind": "exit", "name": "main", "t_ms": 210.0},
    ]
    path = tmp_path / "events.jsonl"
    path.write_text("\n".join(json.dumps(e) for e in events) + "\n", encoding="utf-8")
    tree = replay(read_events_jsonl(path))
    step = tree.root.children[("function", "step", None)]
    inner = next(iter(function_children(step)))
    assert str(rts_path(inner)) == "main/step/size=4/inner"
    assert inner.total_time_ms == pytest.approx(200.0)

    with pytest.raises(CallTreeError):
        apply_event(CallTree(), RegionEvent("pause", "x"))


def test_node_dict_round_trip():
    tree = run_events(
        ("enter", "main"),
        ("enter", "a"), ("exit", "a", None, 120.0),
        ("enter", "a", None, 120.0), ("exit", "a", None, 260.0),
        ("exit", "main", None, 260.0),
    )
    back = node_from_dict(node_to_dict(tree.root))
    assert node_to_dict(back) == node_to_dict(tree.root)
    a = back.children[("function", "a", None)]
    assert a.call_count == 2
    assert a.total_time_ms == pytest.approx(260.0)
    assert a.parent is back
