"""Resolution-compression harness: repeat an OCR-route experiment at two
rendering resolutions and tabulate absolute metrics plus relative change.

Note the reference visual encoder pools 16x16 patch means, which box-filter
downsampling preserves almost exactly, so at desk scale the relative-change
row sits near zero by construction: the harness reports it rather than
asserting any threshold.
"""

import json
from pathlib import Path

from sidrec.config import ExperimentConfig
from sidrec.pipeline import run_resolution_harness

CONFIG = Path(__file__).parent.parent / "configs" / "resolution_harness.json"

cfg = ExperimentConfig.from_dict(json.loads(CONFIG.read_text()))
print(f"running {cfg.raw['name']!r} at resolutions 1024 and 256 "
      f"(canvas {cfg.raw['render']['canvas']}, ocr_text via the reference encoder)\n")

table = run_resolution_harness(cfg, [1024, 256])

out = Path(cfg.raw["output_dir"])
print((out / "resolution_table.txt").read_text())
print(f"machine-readable copies: {out / 'resolution_table.json'}, {out / 'resolution_table.csv'}")
