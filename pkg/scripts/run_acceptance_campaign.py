"""Desk-scale L=22 observability campaign used by the acceptance suite.

Runs 5 references x 40 guesses for each sensor layout below, journaling every
trial so an interrupted run resumes where it stopped:

    python scripts/run_acceptance_campaign.py --out acceptance_cache --jobs 4
"""
import argparse
import json
import sys
import time
from pathlib import Path

from ksobs.harness import CampaignFilter, CaseSet, generate_case_set, run_campaign, summarize
from ksobs.presets import get_preset

SEED = 2024
# (name, layouts, pseudo-projection)
RUNS = [
    ("pp", [(8, 4), (2, 2), (4, 2), (4, 4)], True),
    ("nopp", [(4, 4)], False),
]


def case_set(out: Path) -> tuple:
    stem = out / "cases_L22"
    if stem.with_suffix(".json").exists():
        return CaseSet.load(stem), stem
    cases = generate_case_set("L22", SEED)
    cases.save(stem)
    return cases, stem


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="acceptance_cache")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cases, stem = case_set(out)
    start = time.time()
    count = [0]

    def progress(r):
        count[0] += 1
        print(f"[{time.time() - start:8.0f}s] {count[0]:4d} {r.trial_id} loss={r.final_loss:.2e} "
              f"cs={r.cs_full:.3f} e_u={r.e_u:.3f}", flush=True)

    for name, layouts, pp in RUNS:
        filt = CampaignFilter(n_refs=5, n_guesses=40, pp=(pp,))
        results = run_campaign(cases, layouts, filt=filt, out_dir=out / f"campaign_{name}",
                               jobs=args.jobs, case_stem=stem, progress=progress)
        summary = summarize(results, get_preset("L22"))
        summary["seed"] = SEED
        (out / f"campaign_{name}" / "summary.json").write_text(json.dumps(summary, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
