"""Regenerate docs/openapi.json from the live FastAPI app.

Run from the repository root after changing service routes or models:

    python scripts/export_openapi.py
"""

from __future__ import annotations

import json
from pathlib import Path

from toneguide import service, trainer


def main() -> None:
    config = trainer.TrainConfig(lut_bins=7, lut_dim=5, cond_size=32)
    app = service.create_app(checkpoint=trainer.initialize_checkpoint(config))
    schema = app.openapi()
    out = Path(__file__).resolve().parent.parent / "docs" / "openapi.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(schema, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
