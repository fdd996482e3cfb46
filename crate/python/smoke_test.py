"""Smoke test for the resonance_forge extension.

Build first with `cargo build --release -p resonance-forge-py`; the script
loads target/release/libresonance_forge.so if the module is not installed.
"""

import importlib.util
import json
import math
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import resonance_forge

        return resonance_forge
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libresonance_forge.so"
        if lib.exists():
            spec = importlib.util.spec_from_file_location("resonance_forge", lib)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            return module
    sys.exit("resonance_forge not found: run cargo build --release -p resonance-forge-py")


def main():
    rf = load()
    e = math.exp

    f = rf.JetMap.from_terms(
        2,
        2,
        [
            (0, [1, 0], e(-2)),
            (0, [0, 2], 0.3),
            (0, [1, 1], 0.5),
            (1, [0, 1], e(-1)),
            (1, [1, 1], -0.4),
            (1, [0, 2], 0.2),
        ],
    )
    inv = f.invert()
    assert f.compose(inv).max_abs_diff(rf.JetMap.identity(2, 2)) < 1e-12
    assert rf.JetMap.from_json(f.to_json()) == f

    rs = rf.ResonanceStructure([-2.0, -1.0])
    assert rs.max_degree == 2
    classes = {(t, tuple(a)): c for t, a, _, c in rs.weights()}
    assert classes[(0, (0, 2))] == "resonance"
    assert not rs.is_member(f, "H0")

    h, nf = rf.sternberg(f, rs)
    assert abs(nf.coeff(0, [0, 2]) - 0.3) < 1e-10
    assert rs.project(nf, "non_resonance").norm() < 1e-10

    charts = rf.normal_form([f] * 300, rs, tail=60)
    assert charts.residual <= 1e-8
    assert charts.chart(150).max_abs_diff(h) < 1e-7

    exps, mult = rf.lyapunov_spectrum([[[e(-2), 1.0], [0.0, e(-1)]]] * 2000)
    assert mult == [1, 1] and abs(exps[0] + 2) < 1e-2 and abs(exps[1] + 1) < 1e-2

    exp = rf.Experiment.load(str(ROOT / "crates/core/configs/default.json"))
    verdict = json.loads(exp.verify())
    assert verdict["passed"], verdict["first_failure"]
    with tempfile.TemporaryDirectory() as out:
        passed, lines = exp.execute("spectrum", out)
        assert passed and (pathlib.Path(out) / "spectrum.json").exists()

    try:
        rs.project(f, "bogus")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown class accepted")

    print("smoke test passed:", ", ".join(c["name"] for c in verdict["checks"]))


if __name__ == "__main__":
    main()
