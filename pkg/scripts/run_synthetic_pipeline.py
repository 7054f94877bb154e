"""End-to-end run of the CLI on a seeded synthetic dataset, fully offline.

    python3 scripts/run_synthetic_pipeline.py --out-dir runs/synthetic
"""
import argparse
import sys
import time
from pathlib import Path

from normverify import norms
from normverify.cli import main
from normverify.synthetic import SyntheticConfig, make_synthetic


def step(*argv: str) -> None:
    t0 = time.perf_counter()
    code = main(list(argv))
    print(f"{argv[0]:>10} {' '.join(argv[1:2]) if argv[0] == 'triplets' else ''}  "
          f"exit {code}  {time.perf_counter() - t0:6.1f}s", file=sys.stderr)
    if code:
        sys.exit(code)


def run(out: Path, cfg: SyntheticConfig, p_miss: float, p_fa: float, n_triplets: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    ds = make_synthetic(cfg)
    norms.write_norms(ds, out / "concepts.csv", out / "cells.csv")
    d, m = str(out / "dataset.json"), str(out / "machine.json")
    step("ingest", "--concepts", str(out / "concepts.csv"), "--cells", str(out / "cells.csv"), "--out", d)
    step("verify", "--dataset", d, "--out", m, "--mock", f"p_miss={p_miss}", f"p_fa={p_fa}",
         "--seed", str(cfg.seed))
    step("score", "--dataset", d, "--machine", m, "--sweep", "--out", str(out / "sweep.csv"),
         "--markdown", str(out / "sweep.md"))
    step("triplets", "generate", "--dataset", d, "--n", str(n_triplets), "--seed", str(cfg.seed),
         "--out", str(out / "triplets.csv"))
    step("triplets", "synth-votes", "--dataset", d, "--machine", m, "--triplets", str(out / "triplets.csv"),
         "--space", "combined", "--out", str(out / "votes.csv"))
    step("report", "--dataset", d, "--machine", m, "--triplets", str(out / "triplets.csv"),
         "--votes", str(out / "votes.csv"), "--out-dir", str(out / "report"))
    print((out / "report" / "summary.md").read_text())


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=Path("runs/synthetic"))
    ap.add_argument("--animals", type=int, default=150)
    ap.add_argument("--artifacts", type=int, default=150)
    ap.add_argument("--features", type=int, default=1000, help="per domain")
    ap.add_argument("--p-miss", type=float, default=0.3)
    ap.add_argument("--p-fa", type=float, default=0.1)
    ap.add_argument("--triplets", type=int, default=500, help="per condition")
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    cfg = SyntheticConfig(n_animals=a.animals, n_artifacts=a.artifacts, n_animal_features=a.features,
                          n_artifact_features=a.features, seed=a.seed)
    run(a.out_dir, cfg, a.p_miss, a.p_fa, a.triplets)
