"""Runtime invariant suite behind ``bali-codec selftest``.

Each check prints one PASS/FAIL line with the measured quantity; the exit
code is 0 only when every check passes.  Thresholds here are health bounds
for a working build; the test suite pins the stricter documented tolerances.
"""

from __future__ import annotations

import time

import numpy as np

from .decode import DecodeConfig, DecodeMode, decode_all
from .disturb import Disturbance, transfer_field, transfer_heatmap, transfer_landmarks
from .field import encode_field
from .formats import parse_pts, read_container, write_container, write_pts
from .geometry import GridSpec
from .heatmap import KernelSpec, distance_transform, kernel_value, render_landmark_heatmaps
from .losses import js_divergence, normalize
from .metrics import auc, failure_rate
from .synthetic import random_landmarks, synthetic_face

__all__ = ["run_selftest"]


def _brute_force_edt(raster: np.ndarray) -> np.ndarray:
    js, is_ = np.nonzero(raster)
    jj, ii = np.indices(raster.shape)
    d2 = (ii[:, :, None] - is_[None, None, :]) ** 2 + (jj[:, :, None] - js[None, None, :]) ** 2
    return np.sqrt(d2.min(axis=2))


def run_selftest(seed: int = 0, quick: bool = False) -> int:
    rng = np.random.default_rng(seed)
    grid = GridSpec(128, 128)
    n_round = 10 if quick else 30
    n_equiv = 6 if quick else 20
    results: list[tuple[str, bool, str]] = []

    def check(name: str, ok: bool, detail: str) -> None:
        results.append((name, bool(ok), detail))

    # round-trip exactness
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(n_round):
        l = random_landmarks(rng, grid, margin=6.0)
        stack = render_landmark_heatmaps(l, KernelSpec.gaussian())
        field = encode_field(l, 5)
        decoded = decode_all(stack, field, DecodeConfig(3)).landmarks
        worst = max(worst, float(np.abs(decoded.points - l.points).max()))
    check(
        "roundtrip",
        worst < 1e-4,
        f"max error {worst:.3e} px over {n_round} samples ({time.perf_counter() - t0:.2f}s)",
    )

    # field-weighted decode beats heatmap-only decode
    field_errs, heat_errs = [], []
    for _ in range(50):
        l = random_landmarks(rng, grid, n_points=4, margin=8.0)
        stack = render_landmark_heatmaps(l, KernelSpec.gaussian())
        field = encode_field(l, 5)
        a = decode_all(stack, field, DecodeConfig(3)).landmarks.points
        b = decode_all(stack, None, DecodeConfig(3, DecodeMode.HEATMAP_SOFT_ARGMAX)).landmarks.points
        field_errs.append(np.linalg.norm(a - l.points, axis=1).mean())
        heat_errs.append(np.linalg.norm(b - l.points, axis=1).mean())
    fe, he = float(np.mean(field_errs)), float(np.mean(heat_errs))
    check("field_advantage", fe < he and fe < 1e-4, f"field {fe:.2e} px vs heatmap {he:.2e} px")

    # equivariance of decode under spatial disturbances
    worst_eq = 0.0
    for i in range(n_equiv):
        l = synthetic_face(rng, grid)
        d = (
            Disturbance.rotate(float(rng.uniform(-60, 60)))
            if i % 3 == 0
            else Disturbance.compose(
                (
                    Disturbance.rotate(float(rng.uniform(-60, 60))),
                    Disturbance.rescale(float(rng.uniform(0.5, 1.0))),
                )
            )
            if i % 3 == 1
            else Disturbance.flip()
        )
        stack = render_landmark_heatmaps(l, KernelSpec.gaussian())
        field = encode_field(l, 5)
        warped = decode_all(
            transfer_heatmap(d, stack), transfer_field(d, field), DecodeConfig(3)
        ).landmarks.points
        expect = transfer_landmarks(d, l).points
        keep = grid.contains(expect, margin=6.0)
        if keep.any():
            worst_eq = max(worst_eq, float(np.abs(warped[keep] - expect[keep]).max()))
    check("equivariance", worst_eq < 0.5, f"max error {worst_eq:.3f} px over {n_equiv} pairs")

    # texture transfer is the identity, bit for bit
    l = synthetic_face(rng, grid)
    stack = render_landmark_heatmaps(l, KernelSpec.gaussian())
    d = Disturbance.noise_gaussian(0.05, seed=3)
    check(
        "texture_identity",
        transfer_heatmap(d, stack) is stack,
        "texture transfer returns the stack unchanged",
    )

    # JS divergence axioms + hand value
    ok_js = True
    for _ in range(50 if quick else 200):
        p = normalize(rng.random((8, 8)))
        q = normalize(rng.random((8, 8)))
        a, b = js_divergence(p, q), js_divergence(q, p)
        ok_js &= abs(a - b) < 1e-12 and 0.0 <= a <= np.log(2) + 1e-12
    hand = js_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5]))
    ok_js &= abs(hand - 0.215762) < 1e-5
    check("js_axioms", ok_js, f"hand value {hand:.6f} (expect 0.215762)")

    # kernel limiting behavior
    r2 = np.linspace(0.0, (4 * 1.5) ** 2, 2001)
    gauss = kernel_value(r2, KernelSpec.gaussian(1.5))
    ged_gap = float(np.abs(kernel_value(r2, KernelSpec.ged(1e-8, 1.5)) - gauss).max())
    std_gap = float(np.abs(kernel_value(r2, KernelSpec.student_t(200.0, 1.5)) - gauss).max())
    check("kernel_ged_limit", ged_gap < 1e-6, f"sup gap {ged_gap:.2e}")
    # the exact peak-normalized Student-t at df=200 sits ~1.5e-3 from the
    # Gaussian; 2e-3 is the health bound for a correct implementation
    check("kernel_student_t_limit", std_gap < 2e-3, f"sup gap {std_gap:.2e}")

    # exact distance transform vs brute force
    ok_edt = True
    for _ in range(5 if quick else 20):
        size = int(rng.integers(4, 20))
        raster = rng.random((size, size)) < 0.15
        if not raster.any():
            raster[int(rng.integers(size)), int(rng.integers(size))] = True
        ok_edt &= bool(np.allclose(distance_transform(raster), _brute_force_edt(raster), atol=1e-9))
    check("distance_transform", ok_edt, "matches brute-force nearest-cell scan")

    # metric oracles
    a1 = auc([0.02, 0.06], 0.08)
    f1 = failure_rate([0.03, 0.05, 0.12], 0.10)
    check("metrics", abs(a1 - 0.5) < 1e-12 and abs(f1 - 1 / 3) < 1e-12, f"auc {a1}, fr {f1:.4f}")

    # format round trips
    l = random_landmarks(rng, grid, margin=6.0)
    back = parse_pts(write_pts(l), grid=grid)
    sections = {"a": ("tag", rng.random((3, 4, 5)).astype(np.float32))}
    data = write_container(sections)
    same = write_container(read_container(data)) == data
    check(
        "formats",
        bool(np.allclose(back.points, l.points, atol=1e-6)) and same,
        "pts and container write/read are inverses",
    )

    width = max(len(name) for name, _, _ in results)
    failures = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
        failures += 0 if ok else 1
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 0 if failures == 0 else 1
