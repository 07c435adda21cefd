#!/usr/bin/env python3
"""Smoke test for the gengrad Python extension.

Builds nothing itself: it locates the compiled cdylib under target/, copies
it next to a temp directory as an importable module, and exercises the main
types and operations end to end.

Run from the repository root after `cargo build -p gengrad-py`:

    python3 python/smoke_test.py
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def load_module():
    candidates = [
        REPO / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libgengrad.so", "gengrad.so", "libgengrad.dylib")
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("no compiled extension found; run `cargo build -p gengrad-py` first")
    stage = Path(tempfile.mkdtemp(prefix="gengrad_py_"))
    shutil.copy2(built, stage / "gengrad.so")
    sys.path.insert(0, str(stage))
    import gengrad

    return gengrad


def approx(a, b, tol=1e-12):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    gg = load_module()
    checks = 0

    # activations and the generalized derivative
    relu = gg.Activation.relu()
    assert relu.value(-2.0) == 0.0 and relu.value(3.0) == 3.0
    assert relu.derivative(0.0) == 0.0 and relu.derivative(1.0) == 1.0
    leaky = gg.Activation.leaky_relu(0.1)
    assert leaky.derivative(-2.0) == 0.1
    report = json.loads(relu.validate())
    assert report["one_sided_continuous"] and report["derivative_locally_bounded"]
    bad = json.loads(gg.Activation.oscillatory().validate())
    assert not bad["derivative_locally_bounded"]
    checks += 1

    # approximant family: three-zone values, C1 joins
    fam = gg.Approximants(relu, eta="cubic_smoothstep")
    approx(fam.delta(), 0.5)
    approx(fam.value(1, 1.0), 1.0)
    approx(fam.value(1, 0.1), 0.0)
    approx(fam.value(1, 0.4), 0.2592, 1e-12)
    assert fam.boundary_c1_defect(16) <= 1e-6
    sweep = json.loads(fam.validate([-1.0, 0.0, 1.0, 0.01], 64))
    assert [e["stabilization"] for e in sweep["entries"]] == [1, 1, 1, 50]
    checks += 1

    # forward pass and flat layout
    net = gg.Network([1, 1])
    out, _ = net.forward([2.0, 3.0], [5.0], relu)
    approx(out[0], 13.0)
    net3 = gg.Network([3, 5, 4, 3])
    assert net3.param_count() == 59
    assert net3.bias_index(3, 3) == 58
    checks += 1

    # risk and the three gradient routes
    net = gg.Network([1, 1])
    data = gg.Dataset([([2.0], [1.0], 1.0)])
    mse = gg.Loss.mse()
    approx(gg.risk_value([1.0, 0.0], net, data, mse, relu), 1.0)
    g = gg.gradient([1.0, 0.0], net, data, mse, relu)
    assert g == [4.0, 2.0], g
    ps = gg.gradient_pathsum([1.0, 0.0], net, data, mse, relu)
    assert ps == g, (ps, g)
    checks += 1

    # smoothed gradients stabilize bit-exactly on a wider fixture
    fx = gg.fixture("relu-2-3-2")
    net = gg.Network(fx["widths"])
    data = gg.Dataset(fx["samples"])
    theta = gg.random_theta(net, seed=11)
    exact = gg.gradient(theta, net, data, mse, fx["activation"])
    fam = gg.Approximants(fx["activation"])
    assert gg.gradient_smoothed(theta, net, data, mse, fam, 1 << 20) == exact
    report = json.loads(
        gg.convergence_experiment(theta, net, data, mse, fam, [2**p for p in range(21)])
    )
    assert report["stabilization_index"] is not None
    assert report["limit"] == exact
    checks += 1

    # smooth-region FD agreement
    agreement = json.loads(gg.smooth_region_agreement(theta, net, data, mse, fx["activation"]))
    assert agreement["margin_ok"] and agreement["discrepancy"] <= 1e-4, agreement
    checks += 1

    # limiting-subgradient witness on a kink-pinned fixture
    fx = gg.fixture("relu-1-1-1-pinned")
    net = gg.Network(fx["widths"])
    data = gg.Dataset(fx["samples"])
    fam = gg.Approximants(fx["activation"])
    witness = json.loads(
        gg.subgradient_witness(fx["theta"], net, data, mse, fx["activation"], fam)
    )
    assert witness["distances"][-1] <= 1e-8
    assert witness["grad_gaps"][-1] <= 1e-8
    assert all(s["sign_violations"] == 0 for s in witness["steps"])
    checks += 1

    # probes
    pairs = gg.pathological_probe(10)
    approx(pairs[0][1], math.pi)
    approx(pairs[9][1], 10 * math.pi)
    c = gg.lipschitz_probe(fx["theta"], net, data, mse, fx["activation"], n_pairs=500)
    assert math.isfinite(c) and c > 0
    assert "affine-1-1" in gg.fixture_names()
    checks += 1

    print(f"smoke test: PASS ({checks} check groups)")


if __name__ == "__main__":
    main()
