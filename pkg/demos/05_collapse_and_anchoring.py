"""The confident-wrong-consensus failure mode, and what anchoring does to it.

A slice of the standard world's unlabeled questions starts out with a
planted wrong consensus: the initial policy answers them confidently and
incorrectly, so their majority votes are unanimous lies.  Pure
self-training turns that into a feedback loop -- the vote rewards itself.
This script traces the loop epoch by epoch, then compares where the
poisoned questions end up under self-training, supervised training, and
trajectory-matched semi-supervised training.

Run with:  python demos/05_collapse_and_anchoring.py   (about 10s)
"""

from trajrl import TrainerConfig, default_v1, greedy_accuracy, run

SEED = 0


def biased_map(dataset):
    return {
        q.question_id: q.bias_target for q in dataset.unlabeled if q.bias_target is not None
    }


def final_biased_accuracy(result):
    planted = biased_map(result.dataset)
    questions = [q for q in result.dataset.unlabeled if q.question_id in planted]
    return greedy_accuracy(
        result.policy.params,
        questions,
        result.dataset.eval_answers,
        result.dataset.response_length,
    )


def main() -> None:
    world = default_v1(seed=SEED)
    print("running unsupervised / supervised / trapo on the standard world, seed"
          f" {SEED} ...")
    runs = {
        p: run(TrainerConfig(seed=SEED, paradigm=p), world)
        for p in ("unsupervised", "supervised", "trapo")
    }
    uns = runs["unsupervised"]
    planted = biased_map(uns.dataset)
    golds = uns.dataset.eval_answers
    print(f"{len(planted)} of {len(uns.dataset.unlabeled)} unlabeled questions are poisoned")
    print(f"their starting greedy accuracy: {uns.initial_eval['eval_acc_biased']:.2f}"
          " -- the planted answer wins every argmax")
    print()

    print("self-training feedback loop, epoch by epoch:")
    print("  epoch | votes == planted lie | votes == true answer")
    heal_ever = 0.0
    for epoch in range(1, uns.trainer_config.epochs + 1):
        rows = [r for r in uns.records if r.epoch == epoch and r.qid in planted]
        persist = sum(r.pseudo_label == planted[r.qid] for r in rows) / len(rows)
        heal = sum(r.pseudo_label == golds[r.qid] for r in rows) / len(rows)
        heal_ever = max(heal_ever, heal)
        print(f"  {epoch:>5} | {persist:>20.3f} | {heal:>20.3f}")
    print()
    if heal_ever == 0.0:
        print("the loop is sticky in the worst way: even when training noise eventually")
        print("dislodges the planted answer, the vote drifts to OTHER wrong answers --")
        print("at no epoch did any poisoned question's consensus land on the truth.")
    else:
        print(f"(some questions healed this run; best epoch-level heal rate {heal_ever:.3f})")
    print()

    print("where the poisoned questions end up (greedy accuracy, final epoch):")
    for p in ("unsupervised", "supervised", "trapo"):
        acc = final_biased_accuracy(runs[p])
        print(f"  {p:<12} {acc:.3f}")
    sup = final_biased_accuracy(runs["supervised"])
    tra = final_biased_accuracy(runs["trapo"])
    gap_pts = 100.0 * (tra - sup)
    print()
    print(f"trapo finishes {gap_pts:+.1f} points relative to the supervised baseline")
    print("on the poisoned slice.  nothing un-poisons these questions -- their votes")
    print("never discover the truth -- but the labeled anchor keeps the trainer from")
    print("feeding the loop, which is the difference between a contained failure and")
    print("a self-reinforcing one.")


if __name__ == "__main__":
    main()
