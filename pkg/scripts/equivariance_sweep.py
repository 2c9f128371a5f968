"""Decode equivariance under rotation/scaling of the encoded tensors.

For each disturbance magnitude, encode a batch of synthetic faces, push the
tensors through the transfer operator, decode, and compare against the
transferred landmarks.

    python scripts/equivariance_sweep.py [--n 20] [--seed 0]
"""

import argparse

import numpy as np

import balicodec as bc


def sweep_one(d, faces):
    worst = 0.0
    mean_acc = []
    for face in faces:
        stack = bc.render_landmark_heatmaps(face, bc.KernelSpec.gaussian(1.5))
        field = bc.encode_field(face, r_support=5)
        decoded = bc.decode_all(
            bc.transfer_heatmap(d, stack), bc.transfer_field(d, field), bc.DecodeConfig(3)
        ).landmarks.points
        expect = bc.transfer_landmarks(d, face).points
        keep = face.grid.contains(expect, margin=6.0)
        err = np.linalg.norm(decoded[keep] - expect[keep], axis=1)
        worst = max(worst, float(err.max()))
        mean_acc.append(err.mean())
    return float(np.mean(mean_acc)), worst


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    grid = bc.GridSpec(128, 128)
    faces = [bc.synthetic_face(rng, grid) for _ in range(args.n)]

    print(f"{'disturbance':>24} {'mean err px':>12} {'max err px':>12}")
    for angle in (-60, -30, -10, 10, 30, 60):
        mean, worst = sweep_one(bc.Disturbance.rotate(float(angle)), faces)
        print(f"{f'rotate {angle:+d} deg':>24} {mean:12.4f} {worst:12.4f}")
    for s in (0.5, 0.7, 0.9, 1.0):
        mean, worst = sweep_one(bc.Disturbance.rescale(s), faces)
        print(f"{f'scale x{s:.2f}':>24} {mean:12.4f} {worst:12.4f}")
    mean, worst = sweep_one(bc.Disturbance.flip(), faces)
    print(f"{'mirror flip':>24} {mean:12.4f} {worst:12.4f}")
    mean, worst = sweep_one(
        bc.Disturbance.compose((bc.Disturbance.rotate(45.0), bc.Disturbance.rescale(0.6))), faces
    )
    print(f"{'rotate +45 / scale x0.6':>24} {mean:12.4f} {worst:12.4f}")


if __name__ == "__main__":
    main()
