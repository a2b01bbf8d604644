"""Long-horizon error-accumulator norms against the update mass each client has absorbed."""

import argparse
import sys

import numpy as np

from compsecagg import fl
from compsecagg.data import make_blobs, partition_iid, train_test_split
from compsecagg.models import ToyModel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rounds", type=int, default=600)
    ap.add_argument("--every", type=int, default=50)
    ap.add_argument("--rho", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ds = make_blobs(1000, 20, 2, separation=3.0, seed=args.seed)
    train, test = train_test_split(ds, 0.25, seed=args.seed)
    model = ToyModel("logreg", 20)
    cfg = fl.TrainConfig(rho=args.rho, seed=args.seed)
    state = fl.init_state(model, partition_iid(train, 5, seed=args.seed), cfg)
    mass = np.zeros(5)
    print("round,max_delta_norm,max_delta_over_mass,test_acc")
    for r in range(1, args.rounds + 1):
        updates = fl.local_updates(state, model, cfg)
        mass += [np.linalg.norm(u) for u in updates]
        fl.federated_round(state, model, cfg, updates)
        if r % args.every == 0:
            norms = np.array([np.linalg.norm(c.acc.delta) for c in state.clients])
            print(f"{r},{norms.max():.4f},{(norms / mass).max():.4f},"
                  f"{model.accuracy(state.theta, test.X, test.y):.4f}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
