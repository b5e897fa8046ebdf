import os
import sys
import tempfile
import time
from pathlib import Path

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.config import TrainerConfig
from app.data.split import make_split
from app.data.synthetic import write_synthetic_dataset
from app.trainer import run_experiment

if __name__ == "__main__":
    # Minimal smoke: tiny synthetic dataset, one short epoch per mode, no network
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        print("Generating 16+4 synthetic samples…")
        manifest = write_synthetic_dataset(root / "data", 16, 4, image_size=32, seed=0)
        split = make_split(manifest, 0.25, seed=0)
        for mode in ("supervised", "fixmatch", "resmatch"):
            cfg = TrainerConfig(mode=mode, epochs=1, image_size=32, learning_rate=1e-3, max_steps_per_epoch=3)
            start = time.time()
            result = run_experiment(cfg, manifest, split, root / mode)
            last = result.losses[-1] if result.losses else {}
            print(
                f"{mode:>10}: {len(result.losses)} steps in {time.time() - start:.2f}s, "
                f"L_total={last.get('L_total')}, oIoU={result.final_oiou}"
            )
