"""Run the feedback-loop simulation on a skewed synthetic dataset and print the
per-iteration amplification curve, optionally sweeping the acceptance exponent."""

import argparse
import sys

from fairexposure.recommend import RecommendConfig
from fairexposure.simulate import SimConfig, amplification_curve, log_to_tsv, run_feedback_loop
from fairexposure.synthetic import random_genres, random_groups, zipf_dataset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--users", type=int, default=200)
    ap.add_argument("--items", type=int, default=100)
    ap.add_argument("--exponent", type=float, default=1.2)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--iterations", type=int, default=5)
    ap.add_argument("--algorithm", default="mostpopular")
    ap.add_argument("--alphas", type=float, nargs="+", default=[-0.1])
    ap.add_argument("--tsv", action="store_true", help="emit the full IterationLog TSV instead of the curve")
    args = ap.parse_args()

    data = zipf_dataset(args.users, args.items, args.exponent, seed=args.seed)
    genres = random_genres(data.items, seed=args.seed)
    groups = random_groups(data.users, seed=args.seed)
    recommender = RecommendConfig(algorithm=args.algorithm, t=10, k=30, factors=10, epochs=10)
    if not args.tsv:
        print("alpha\tt\tdata_pop\trec_pop\ttheta\tpredicted\trealized\t1-IA")
    for alpha in args.alphas:
        cfg = SimConfig(
            iterations=args.iterations, acceptance_alpha=alpha, recommender=recommender, seed=args.seed
        )
        log = run_feedback_loop(data, genres, groups, cfg)
        if args.tsv:
            sys.stdout.write(log_to_tsv(log))
            continue
        for point, rec in zip(amplification_curve(log), log.records):
            print(
                f"{alpha}\t{point.iteration}\t{point.mean_data_popularity:.4f}\t{point.mean_rec_popularity:.4f}"
                f"\t{point.theta:.4f}\t{point.predicted_increment:.5f}\t{point.realized_increment:.5f}"
                f"\t{rec.item_coverage:.3f}"
            )


if __name__ == "__main__":
    main()
