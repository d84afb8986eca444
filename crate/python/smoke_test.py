"""Smoke test for the Python bindings.

    pip install --no-build-isolation -e crates/python
    python python/smoke_test.py
"""

import json
import math
import pathlib

import drmdp


def close(a, b, tol=1e-7):
    return math.isclose(a, b, abs_tol=tol)


def main():
    names = drmdp.examples()
    assert len(names) == 7, names

    gap = drmdp.Instance.example("ex_2_2")
    assert gap.horizon == 1 and gap.initial_state == "sA"
    assert gap.actions(0, "sA") == ["aL", "aR"]
    r = gap.solve()["kernel"]
    assert close(r["primal_values"][0]["sA"], 0.5)
    assert close(r["dual_values"][0]["sA"], 0.25)
    assert close(r["gap"], 0.25)
    assert "gap at sA" in gap.solve(table=True)

    checks = gap.check()["kernel"]["stages"][0]
    assert checks["worst_case_kernel"] == "fails"
    assert checks["convex_marginal"]["sA"]["convex"] is False

    eq = drmdp.Instance.example("ex_2_3").oracle(policy_grid=100)["kernel"]
    assert abs(eq["static_primal"] - eq["game_primal"]) <= 0.02

    again = drmdp.Instance.parse(gap.to_json())
    assert again.to_json() == gap.to_json()

    assert close(drmdp.avar([0.0, 1.0, 4.0], [0.5, 0.4, 0.1], 0.5), 1.6)
    value, _ = drmdp.avar_lp([0.0, 1.0, 4.0], [0.5, 0.4, 0.1], 0.5)
    assert close(value, 1.6)
    v, rows, cols = drmdp.solve_matrix_game([[1.0, 0.0], [0.0, 1.0]])
    assert close(v, 0.5) and close(rows[0], 0.5)

    for name in names:
        run = drmdp.run_example(name)
        assert run["passed"], json.dumps(run, indent=2)

    try:
        drmdp.Instance.example("ex_2_1").oracle(max_enum=1)
    except drmdp.CapExceeded:
        pass
    else:
        raise AssertionError("cap not enforced")
    try:
        drmdp.Instance.read("missing.json")
    except drmdp.ValidationError:
        pass
    else:
        raise AssertionError("missing file accepted")

    try:
        import jsonschema
    except ImportError:
        jsonschema = None
    if jsonschema is not None:
        schema_path = pathlib.Path(__file__).resolve().parent.parent / "docs" / "instance.schema.json"
        schema = json.loads(schema_path.read_text())
        for name in names:
            jsonschema.validate(json.loads(drmdp.Instance.example(name).to_json()), schema)

    print(f"smoke test ok ({len(names)} examples)")


if __name__ == "__main__":
    main()
