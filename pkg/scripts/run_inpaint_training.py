"""Adversarial fill training on the synthetic smooth-image corpus.

Runs the alternating generator/discriminator loop with mixed
object-shaped and stroke-shaped corruption masks, then reports the
reconstruction trend.

    python3 scripts/run_inpaint_training.py --steps 200 --size 32
"""

import argparse
from pathlib import Path

import numpy as np

from declutter.inpaint import Discriminator, Generator
from declutter.synthetic import make_inpaint_corpus
from declutter.training import StrokeMaskSpec, TrainingConfig, train_inpaint_model


def default_object_masks(size: int) -> list:
    boxes = [
        (size // 8, size // 8, size // 2, size // 2),
        (size // 2, size // 3, size - 2, size - size // 6),
        (size // 4, size // 2 + 2, size // 2, size - 2),
    ]
    masks = []
    for r0, c0, r1, c1 in boxes:
        m = np.zeros((size, size), dtype=np.uint8)
        m[r0:r1, c0:c1] = 1
        masks.append(m)
    return masks


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--images", type=int, default=10)
    parser.add_argument("--size", type=int, default=32)
    parser.add_argument("--steps", type=int, default=200)
    parser.add_argument("--batch-size", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("runs/inpaint"))
    args = parser.parse_args()

    corpus = make_inpaint_corpus(args.images, size=args.size, seed=args.seed)
    generator = Generator(
        encoder_channels=(8, 8, 16, 16),
        decoder_channels=(16, 16, 8, 6, 3),
        confidence_hidden=4,
        native_resolution=args.size,
        seed=args.seed,
    )
    discriminator = Discriminator(channels=(8, 16), seed=args.seed)
    config = TrainingConfig(batch_size_inpaint=args.batch_size, epochs=1, seed=args.seed)

    args.out.mkdir(parents=True, exist_ok=True)
    _, _, history = train_inpaint_model(
        corpus,
        default_object_masks(args.size),
        StrokeMaskSpec(seed=args.seed),
        config,
        generator=generator,
        discriminator=discriminator,
        steps=args.steps,
        checkpoint_dir=args.out,
        log_path=args.out / "log.jsonl",
    )

    rec = [row["reconstruction"] for row in history]
    head = float(np.mean(rec[:10]))
    tail = float(np.mean(rec[-10:]))
    print(f"{len(history)} steps: reconstruction {head:.5f} -> {tail:.5f}")
    print(f"checkpoints and log under {args.out}")


if __name__ == "__main__":
    main()
