#!/usr/bin/env python3
"""Regenerate the golden reports for the shipped example configs.

Runs every config in run_configs/ and freezes the reports (timing
stripped) into tests/golden/. Only rerun this when an intentional
numerical or format change invalidates the stored files; the acceptance
suite compares against them byte for byte.
"""

import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent

from pnk.cli import run_config  # noqa: E402
from pnk.config import load_config  # noqa: E402
from pnk.report import canonical_json, strip_volatile  # noqa: E402


def main() -> int:
    golden_dir = ROOT / "tests" / "golden"
    golden_dir.mkdir(parents=True, exist_ok=True)
    for config_path in sorted((ROOT / "run_configs").glob("*.json")):
        config = load_config(config_path)
        with tempfile.TemporaryDirectory() as tmp:
            report, code = run_config(config, Path(tmp))
        if code != 0:
            print(f"{config_path.name}: exit code {code}, not freezing")
            return 1
        out = golden_dir / config_path.name
        out.write_text(canonical_json(strip_volatile(report)),
                       encoding="utf-8")
        print(f"froze {out.relative_to(ROOT)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
