"""Smoke test for the itemchurn Python bindings.

Build and install first:  maturin build --release -m crates/python/Cargo.toml
then  pip install target/wheels/itemchurn-*.whl  and run this script.
"""

import math

import itemchurn_py as ic

SPEC = {
    "n_items": 300,
    "k": 10,
    "seed": 11,
    "probabilities": {
        "kind": "recipe",
        "baseline": {"kind": "uniform", "lo": 0.05, "hi": 0.95},
        "shift": {"kind": "uniform", "lo": -0.4, "hi": 0.4},
        "floor_frac": 0.1,
        "ceiling_frac": 0.05,
    },
}


def main():
    v1, v2, truth, (g1, g2) = ic.generate_pair(SPEC, greedy=True)
    assert len(v1) == len(v2) == 300 and v1.k == 10
    assert len(truth["items"]) == 300

    again = ic.TrialSet.parse(v1.dumps(), 10)
    assert again.item_ids() == v1.item_ids()
    rows = v1.accuracy()
    assert all(r["p"] is None or 0.0 <= r["p"] <= 1.0 for r in rows)

    rel = ic.split_half_reliability(v1, n_splits=200, seed=3)
    assert rel == ic.split_half_reliability(v1, n_splits=200, seed=3)
    assert rel["ci_low"] <= rel["r_xx"] <= rel["ci_high"]
    assert -1.0 <= ic.icc_2_1(v1) <= 1.0

    assert math.isclose(ic.spearman_brown(0.5), 2 * 0.5 / 1.5)
    assert math.isclose(ic.prophecy(0.5, 2.0), ic.spearman_brown(0.5))
    pm = ic.pair_measurement(0.1, 0.1)
    assert math.isclose(pm["s_diff"], math.sqrt(0.02))
    assert ic.categorize(1.96) == ic.categorize(-1.96) == "no_change"
    assert ic.categorize(1.97) == "improved"

    bundle = ic.analyze(v1, v2, greedy=(g1, g2), config={"n_splits": 200, "n_permutations": 100})
    churn = bundle["pair"]["churn"]
    assert churn["n_improved"] + churn["n_no_change"] + churn["n_deteriorated"] == churn["n_analysable"]
    assert churn["n_analysable"] + churn["n_excluded_insufficient"] + churn["n_excluded_floor_ceiling"] == 300
    assert bundle == ic.analyze(v1, v2, greedy=(g1, g2), config={"n_splits": 200, "n_permutations": 100})
    md = ic.render_report(bundle)
    assert md.startswith("# Item-level reliable change report")

    try:
        ic.TrialSet.parse('{"item_id": 3}\n', 10)
    except ValueError:
        pass
    else:
        raise AssertionError("malformed input accepted")

    print(f"ok: {len(v1)} items, r_xx {rel['r_xx']:.3f}, churn {churn['churn_rate_post']:.3f}")


if __name__ == "__main__":
    main()
