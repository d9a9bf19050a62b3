"""Follow one epoch's trajectory-matching selection decision end to end.

Trains a small run, then reconstructs a single post-warmup selection by
hand: pull per-question pass-rate trajectories out of the store, average
the reliable database's trajectories into a reference curve, score every
unlabeled question by cosine similarity against that reference, and apply
the keep-the-top-slice-or-clear-the-bar rule.  Finally replays the same
selection offline from the written log file and confirms it matches the
live run bit for bit.
"""

import tempfile
from pathlib import Path

import numpy as np

from trajrl import (
    TrainerConfig,
    WorldConfig,
    offline_select,
    read_passrates,
    run,
    select,
    tcs,
)

WORLD = WorldConfig(
    n_labeled=10,
    n_unlabeled=20,
    num_features=8,
    num_tokens=64,
    response_length=3,
    n_clusters=5,
    bias_fraction=0.2,
    ood_fraction=0.2,
    seed=5,
)
TRAINER = TrainerConfig(seed=5, epochs=14, warmup_epochs=8, top_p=0.2, gamma=0.6)


def banner(text: str) -> None:
    print()
    print(f"--- {text} ---")


def main() -> None:
    out_dir = Path(tempfile.mkdtemp(prefix="trajrl_demo_"))
    result = run(TRAINER, WORLD, out_dir=str(out_dir))
    epoch = TRAINER.warmup_epochs + 1  # first epoch that selects anything

    banner(f"epoch {epoch}: what the selector saw")
    mask = result.masks[epoch]
    # result.db is the database AFTER the last epoch; the reference that
    # scored epoch `warmup+1` came from the labeled split alone.  Rebuild
    # that view from the run's own records, exactly as the offline path does.
    offline = offline_select(
        result.records,
        top_p=TRAINER.top_p,
        gamma=TRAINER.gamma,
        warmup_epochs=TRAINER.warmup_epochs,
        matching_mode=TRAINER.matching_mode,
        db_policy=TRAINER.db_policy,
    )
    labeled_ids = [q for q, s in offline.split_of.items() if s == "labeled"]
    ref = np.mean([offline.store.get(q)[:epoch] for q in sorted(labeled_ids)], axis=0)
    print(f"reference trajectory (mean over {len(labeled_ids)} reliable questions):")
    print("  " + " ".join(f"{r:.3f}" for r in ref))

    banner("scores, best to worst")
    scores = mask.tcs_scores
    ranked = sorted(scores, key=lambda q: (-scores[q], q))
    n = len(ranked)
    keep = int(np.ceil(TRAINER.top_p * n - 1e-9))
    for rank, qid in enumerate(ranked, start=1):
        traj = offline.store.get(qid)[:epoch]
        marks = []
        if rank <= keep:
            marks.append(f"top {keep}")
        if scores[qid] >= TRAINER.gamma:
            marks.append(f">= gamma {TRAINER.gamma}")
        tag = "SELECTED via " + " + ".join(marks) if qid in mask.selected else "dropped"
        print(f"  #{rank:>2}  q{qid:<3} score {scores[qid]:.4f}  traj "
              + "/".join(f"{r:.2f}" for r in traj) + f"  -> {tag}")
    print(f"rule: union of the top ceil({TRAINER.top_p} * {n}) = {keep} scorers "
          f"and everything scoring >= {TRAINER.gamma}")

    banner("hand-computed scores agree with the run")
    hand = {qid: tcs(offline.store.get(qid)[:epoch], ref) for qid in scores}
    assert hand == dict(scores), "score mismatch"
    assert select(hand, TRAINER.top_p, TRAINER.gamma, epoch).selected == mask.selected
    print("yes: same scores, same mask.")

    banner("offline replay from the log file")
    records = read_passrates(out_dir / "passrates.jsonl")
    replay = offline_select(
        records,
        top_p=TRAINER.top_p,
        gamma=TRAINER.gamma,
        warmup_epochs=TRAINER.warmup_epochs,
        matching_mode=TRAINER.matching_mode,
        db_policy=TRAINER.db_policy,
    )
    for m in replay.masks:
        live = result.masks[m.epoch]
        status = "ok" if m.selected == live.selected else "MISMATCH"
        print(f"  epoch {m.epoch}: {len(m.selected):>2} selected ... {status}")
    print(f"log file: {out_dir / 'passrates.jsonl'}")
    print("the decision is a pure function of the logged pass rates -- no policy needed.")


if __name__ == "__main__":
    main()
