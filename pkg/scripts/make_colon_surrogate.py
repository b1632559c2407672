"""Build the colon surrogate CSV from the R ``survival::colon`` table.

Requires the ``rdatasets`` wheel (not a runtime dependency).  The draw is
stratified so that the surrogate has 191 patients with 65 deaths before
3 years, 22 censored before 3 years and 104 administratively censored at 3.
"""

import sys
from pathlib import Path

import numpy as np
import rdatasets

N_EVENT, N_EARLY, N_ADMIN = 65, 22, 104
Y_PLUS = 3.0
ETYPE = 2


def build(seed: int = 20240601):
    rng = np.random.default_rng(seed)
    df = rdatasets.data("survival", "colon")
    d = df[df.etype == ETYPE]
    years = d.time.to_numpy() / 365.25
    status = d.status.to_numpy()
    rx = (d.rx.to_numpy() != "Obs").astype(int)

    idx = np.arange(len(d))
    events = idx[(status == 1) & (years < Y_PLUS)]
    survivors = idx[years >= Y_PLUS]
    pick_event = rng.choice(events, N_EVENT, replace=False)
    pick_admin = rng.choice(survivors, N_ADMIN, replace=False)

    # independent uniform censoring on the remaining patients
    rest = np.setdiff1d(idx, np.concatenate([pick_event, pick_admin]))
    rng.shuffle(rest)
    early = []
    for i in rest:
        c = rng.uniform(0.0, Y_PLUS)
        if years[i] > c:
            early.append((round(c, 4), i))
        if len(early) == N_EARLY:
            break

    rows = [(min(years[i], Y_PLUS), 1, rx[i]) for i in pick_event]
    rows += [(Y_PLUS, 0, rx[i]) for i in pick_admin]
    rows += [(c, 0, rx[i]) for c, i in early]
    rows.sort()
    return rows


def main(out: str) -> None:
    rows = build()
    with open(out, "w") as fh:
        fh.write("time,event,treated\n")
        for t, e, w in rows:
            fh.write(f"{t:.4f},{e},{w}\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else str(Path(__file__).parents[1] / "src/dpem/datasets/colon.csv"))
