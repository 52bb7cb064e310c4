"""Smoke test for the schedlab Python extension.

Build and run from the repository root:

    cargo build --release -p schedlab-py
    cp target/release/libschedlab.so python/schedlab.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import schedlab  # noqa: E402


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    exp = schedlab.DistributionSpec("exp:1")
    assert exp.is_mhr
    assert close(exp.expected_min(4), 0.25)
    assert close(exp.cdf(1.0), 1 - math.exp(-1))
    assert str(schedlab.DistributionSpec("twopoint:1,10,0.5")) == "twopoint:1,10,0.5"

    inst = schedlab.Instance([[1.0, 10.0], [2.0, 100.0]])
    s = schedlab.solve_min_work(inst, cap=1)
    assert s["assignment"] == [1, 0] and close(s["total_work"], 12.0)

    out = schedlab.run_mechanism(schedlab.Instance([[1.0, 3.0], [2.0, 5.0]]), "minimum-work")
    # both jobs on machine 0; without it they cost 3 + 5 on machine 1
    assert out["payments"] == [8.0, 0.0], out["payments"]

    sampled = schedlab.Instance.sample(exp, 5, 3, seed=7)
    assert sampled.jobs == 5 and sampled.machines == 3
    for kind in ["minimum-work", "bounded-overload"]:
        for i in range(3):
            assert schedlab.ic_audit(sampled, kind, i, c=2.0) == []

    r = schedlab.derive_reserve(exp, 100, 10, "markov", k=2.0)
    assert close(r["beta"], 0.5)

    gap = schedlab.correlation_gap_one_hot(5)
    assert close(gap["ratio"]["mean"], 1 / (1 - 0.8**5)) and gap["pass"]

    dom = schedlab.check_order_stat_dominance(exp, 8, 2, 20000, seed=1)
    assert dom["pass"], dom["max_violation"]

    recs = schedlab.verify("min-hazard-identity")
    assert recs and all(rec["pass"] for rec in recs)

    rep = schedlab.run_campaign("bounded-overload", exp, 16, 16, 200, seed=3, reference="opt-half")
    assert len(rep["rows"]) == 200 and not rep["violations"]
    assert all(row["max_load"] <= 7 for row in rep["rows"])
    print("makespan / opt-half: %.3f" % rep["reference"]["ratio"]["mean"])
    print("smoke test passed (schedlab %s)" % schedlab.__version__)


if __name__ == "__main__":
    main()
