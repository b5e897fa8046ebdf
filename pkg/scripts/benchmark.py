"""
Directional benchmark for the semi-supervised modes.
Trains supervised, fixmatch and resmatch on the same synthetic data and
splits across several seeds and compares median val oIoU, with timings.
"""

import time
import sys
import os
import tempfile
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

import pandas as pd

MODES = ("supervised", "fixmatch", "resmatch")


def benchmark_modes(train: int, val: int, size: int, epochs: int, ratio: float, seeds, lr: float, out: Path):
    """Run every mode on every seed; return a frame of (mode, seed, oIoU, seconds)."""
    from app.config import TrainerConfig
    from app.data.split import make_split
    from app.data.synthetic import write_synthetic_dataset
    from app.trainer import run_experiment

    print("=" * 60)
    print("RESMatch Directional Benchmark")
    print("=" * 60)

    print(f"\n[1/3] Generating {train}+{val} synthetic samples at {size}x{size}...")
    start = time.time()
    manifest = write_synthetic_dataset(out / "data", train, val, image_size=size, seed=0)
    print(f"  Done in {time.time() - start:.2f}s")

    print(f"\n[2/3] Training {len(MODES)} modes x {len(seeds)} seeds, {epochs} epochs, {ratio:.0%} labeled...")
    rows = []
    for seed in seeds:
        split = make_split(manifest, ratio, seed)
        for mode in MODES:
            cfg = TrainerConfig(mode=mode, epochs=epochs, image_size=size, seed=seed, learning_rate=lr)
            start = time.time()
            result = run_experiment(cfg, manifest, split, out / f"{mode}-seed-{seed}")
            elapsed = time.time() - start
            oiou = result.final_oiou.get("val", float("nan"))
            rows.append({"mode": mode, "seed": seed, "oIoU": oiou, "seconds": elapsed})
            print(f"  {mode:>10} seed {seed}: oIoU {oiou:.4f} ({elapsed:.1f}s)")
    return pd.DataFrame(rows)


def summarize(frame: pd.DataFrame) -> bool:
    medians = frame.groupby("mode")["oIoU"].median()
    print("\n[3/3] Summary (median val oIoU):")
    for mode in MODES:
        print(f"  {mode:>10}: {medians[mode]:.4f}")
    gain = (medians["resmatch"] - medians["supervised"]) * 100
    ordered = gain >= 2.0 and medians["fixmatch"] >= medians["supervised"] - 1e-9
    print(f"\n  resmatch - supervised: {gain:+.2f} oIoU points")
    print(f"  Ordering supervised <= fixmatch, resmatch +2 points: {'✓ HOLDS' if ordered else '✗ DOES NOT HOLD'}")
    print("\n" + "=" * 60)
    return ordered


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="Benchmark supervised vs fixmatch vs resmatch")
    parser.add_argument("--train", type=int, default=512, help="synthetic train samples")
    parser.add_argument("--val", type=int, default=128, help="synthetic val samples")
    parser.add_argument("--size", type=int, default=64, help="image side")
    parser.add_argument("--epochs", type=int, default=15, help="epochs per run")
    parser.add_argument("--ratio", type=float, default=0.1, help="labeled fraction")
    parser.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3], help="seeds")
    parser.add_argument("--lr", type=float, default=1e-3, help="learning rate for desk-scale runs")
    parser.add_argument("--quick", action="store_true", help="Quick test (64 samples, 2 epochs, 1 seed)")

    args = parser.parse_args()
    if args.quick:
        args.train, args.val, args.epochs, args.seeds = 64, 16, 2, [1]

    try:
        with tempfile.TemporaryDirectory() as tmp:
            frame = benchmark_modes(
                args.train, args.val, args.size, args.epochs, args.ratio, args.seeds, args.lr, Path(tmp)
            )
        sys.exit(0 if summarize(frame) else 1)
    except KeyboardInterrupt:
        print("\n\n⚠ Benchmark interrupted by user")
    except Exception as e:
        print(f"\n✗ Benchmark failed: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)
