"""Smoke test for the crackscan_py extension.

Build and install first:  cd crates/python && maturin develop --release
Then run:                 python python/smoke.py
"""

import json
import sys

import crackscan_py as cs


def main():
    assert cs.window_count(16, 3) == 2744
    assert abs(cs.f1_score(0.6088826, 0.7225134) - 0.6608490) < 1e-3
    assert cs.benjamini_hochberg([0.01, 0.04, 0.03, 0.5], 0.1) == [True, True, True, False]

    img, truth = cs.make_phantom(48, width=4.0, seed=3)
    assert img.dims == (48, 48, 48) and len(img) == 48**3
    assert truth.count_ones() > 0
    raw = img.to_bytes()
    assert len(raw) == 4 * len(img)
    again = cs.ScalarVolume.from_bytes(img.dims, raw)
    assert again.get(7, 8, 9) == img.get(7, 8, 9)

    spec = {"dims": [48, 48, 48], "seed": 4, "mean": 0.7, "sd": 0.1}
    null_img, null_truth = cs.phantom_from_json(json.dumps(spec))
    assert null_truth.count_ones() == 0

    pipe = cs.Pipeline('{"grid": {"g": 6, "u": 3}}', ["test.alpha=0.5"])
    mask = pipe.binarize(img)
    scores = cs.evaluate(mask, truth)
    assert scores["recall"] > 0.5, scores

    field = pipe.features(mask)
    assert field.g == 6 and len(field.raw) == 216
    t = cs.cusum(field, [0, 0, 0], 3)
    assert t >= 0.0

    null = pipe.calibrate(null_img)
    assert len(null) == 64
    assert null.meta()["config"] == pipe.feature_hash

    report, _, _ = pipe.detect(img, null)
    assert len(report.pvalues) == 64
    cubes = report.cubes
    cube_scores = cs.evaluate(cubes, cs.cube_truth(truth, 6))
    print(f"voxel {scores}")
    print(f"cube  {cube_scores} rejections={report.rejections()}")

    other = cs.Pipeline('{"grid": {"g": 4, "u": 2}}')
    try:
        other.detect(img, null)
    except cs.CalibrationError:
        pass
    else:
        raise AssertionError("mismatched null was accepted")

    try:
        cs.Pipeline('{"grid": {"g": 1}}')
    except ValueError as e:
        assert "grid" in str(e)
    else:
        raise AssertionError("invalid grid was accepted")

    print("smoke ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
