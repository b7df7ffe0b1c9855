"""Grow a few model-based prints from scratch and render impressions.

Each identity starts as a pair of layers: an orientation field induced by
zeros and poles placed according to the pattern class (arch, loop, whorl,
...), and a ridge-frequency map.  Oriented-filter growth from random seed
points then produces the ridge image, and the true minutiae fall out of
the final pattern, no detector involved.
"""

from pathlib import Path

import numpy as np

from printforge.masterprint import (
    class_singularities,
    generate_record,
    ground_truth_minutiae,
    render_impression,
    sample_class,
    zero_pole_orientation,
)

OUT = Path(__file__).with_name("output") / "02_grow_masterprints"


def save_pgm(path, image):
    """Write a [-1, 1] image as an 8-bit PGM (ridges dark)."""
    levels = np.clip((image + 1.0) * 127.5, 0, 255).astype(np.uint8)
    header = f"P5\n{levels.shape[1]} {levels.shape[0]}\n255\n".encode()
    path.write_bytes(header + levels.tobytes())


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(7)

    for identity in range(3):
        label = sample_class(rng)
        config = class_singularities(label, seed=100 + identity, extent=128)
        field = zero_pole_orientation(config, extent=128)
        print(f"identity {identity}: class={label} "
              f"cores={len(config.cores)} deltas={len(config.deltas)} "
              f"orientation range [{field.angles.min():.2f}, {field.angles.max():.2f}] rad")

        record = generate_record(identity_id=identity, seed=100 + identity,
                                 extent=128, label=label)
        minutiae = ground_truth_minutiae(record).minutiae
        endings = sum(1 for m in minutiae if m.kind == "ending")
        print(f"  ridge image {record.ridge_image.shape}, "
              f"{len(minutiae)} true minutiae ({endings} endings, "
              f"{len(minutiae) - endings} bifurcations)")

        save_pgm(OUT / f"id{identity}_{label}_master.pgm", record.ridge_image)

        # Impressions perturb the master: rolled keeps most of the area,
        # plain crops harder and presses flatter.
        for kind in ("rolled", "plain"):
            image = render_impression(record, kind, noise_seed=record.seed + 17)
            save_pgm(OUT / f"id{identity}_{label}_{kind}.pgm", image)

    print(f"\nwrote PGM files to {OUT}")


if __name__ == "__main__":
    main()
