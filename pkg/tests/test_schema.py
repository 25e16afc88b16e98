import pytest

from randcompute.schema import (
    ROOT,
    Operand,
    SchemaError,
    SchemaNodeId,
    build_complete,
    build_from_expression,
    build_schema,
    combine,
    leaf_payload,
    reference_evaluate,
)


def test_complete_k4_shape():
    t = build_complete(4, ["mul", "mul", "add"])
    assert (t.K, t.h, t.L) == (4, 2, 4)
    assert t.is_complete()
    assert t.describe() == "((x1×x2)+(x3×x4))"
    assert reference_evaluate(t, [2, 3, 5, 7]).value == 2 * 3 + 5 * 7


def test_non_complete_levels():
    t = build_from_expression("((y1*y2)+y3)*y4")
    assert (t.K, t.h, t.L) == (4, 3, 2)
    levels = {t.labels[k - 1]: sid.level for sid, k in t.sources.items()}
    assert levels == {"y1": 3, "y2": 3, "y3": 2, "y4": 1}
    assert not t.is_complete()
    assert reference_evaluate(t, [2, 3, 5, 7]).value == (2 * 3 + 5) * 7


def test_parent_sibling_children():
    t = build_complete(4)
    sid = SchemaNodeId(2, 3)
    assert t.parent_of(sid) == (1, 1)
    assert t.sibling_of(sid) == (2, 2)
    with pytest.raises(SchemaError):
        t.parent_of(ROOT)
    with pytest.raises(SchemaError):
        t.sibling_of((5, 0))


def test_subtree_leaves_and_id_map():
    t = build_from_expression("((a@b)@c)@d")
    assert t.subtree_leaves(ROOT) == (1, 2, 3, 4)
    assert t.subtree_leaves((1, 0)) == (1, 2, 3)
    assert t.id_map() == {"a": "3,0", "b": "3,1", "c": "2,1", "d": "1,1"}


def test_append_is_order_sensitive():
    t = build_complete(2, "append")
    ab = reference_evaluate(t, [Operand("a", 1), Operand("b", 2)])
    ba = reference_evaluate(t, [Operand("b", 2), Operand("a", 1)])
    assert ab.trace == "(a⊕b)" and ba.trace == "(b⊕a)"
    assert ab.value != ba.value


def test_combine_orients_by_parity():
    t = build_complete(2, "append")
    left = leaf_payload(1, Operand("a", 1), round=3)
    right = leaf_payload(2, Operand("b", 2), round=3)
    pid, p = combine(t, (1, 1), right, (1, 0), left)
    assert pid == ROOT
    assert p.trace == "(a⊕b)" and p.leaves == (1, 2)
    assert p == reference_evaluate(t, [Operand("a", 1), Operand("b", 2)], round=3)


def test_combine_rejects_non_siblings_and_round_mismatch():
    t = build_complete(4)
    a = leaf_payload(1, "a", 1)
    with pytest.raises(SchemaError):
        combine(t, (2, 1), a, (2, 2), leaf_payload(3, "c", 1))
    with pytest.raises(SchemaError):
        combine(t, (2, 0), a, (2, 1), leaf_payload(2, "b", 2))


@pytest.mark.parametrize("expr", ["a+b+c", "(a+b", "a+", "", "(a+a)", "a % b"])
def test_bad_expressions(expr):
    with pytest.raises(SchemaError):
        build_from_expression(expr)


def test_single_operand_schema():
    t = build_from_expression("x")
    assert (t.K, t.h) == (1, 0)
    assert reference_evaluate(t, [Operand("x", 5)]).trace == "x"


def test_complete_rejects_non_power_of_two():
    with pytest.raises(SchemaError):
        build_complete(6)


def test_build_schema_table():
    assert build_schema({"complete": 4, "op": "+"}).K == 4
    assert build_schema({"expression": "(p*q)"}).K == 2
    with pytest.raises(SchemaError):
        build_schema({"complete": 4, "expression": "a+b"})


def test_evaluate_wraps_mod_2_64():
    t = build_complete(2, "mul")
    assert reference_evaluate(t, [2**40, 2**40]).value == 0
