"""Quickstart: planted data, training, recommendations and a held-out check.

    python3 demos/01_quickstart.py
"""

import numpy as np

from tripletrec.config import RunConfig
from tripletrec.dataset import generate_planted, make_folds
from tripletrec.metrics import hit_rate_at_k, mrr
from tripletrec.pipeline import fit_model
from tripletrec.recommender import recommend, recommend_all

# A small planted catalogue: two user groups, each with its own artists and
# listening communities. Tracks by one artist are heard together.
store = generate_planted(num_groups=2, users_per_group=100, seed=0)
print(f"{store.num_users} users, {store.num_tracks} tracks, {store.num_interactions} interactions")

# Hold out one track per user and train on the rest.
fold = make_folds(store, 1, seed=0)[0]
cfg = RunConfig(seed=0, dim=32, epochs=8, w2v_epochs=10)
init, table, trace = fit_model(fold.train, cfg)

print("\nepoch   loss     active")
for epoch, row in enumerate(trace):
    print(f"{epoch:5d}  {row.total:.4f}  {row.active_fraction:.3f}")

# Ten recommendations for one user. History is excluded by default.
user = 0
rng = np.random.default_rng(0)
rec = recommend(table, user, 10, cfg.candidate_pool, rng, exclude=fold.train.user_tracks(user))
artists = [store.tracks[t].artist_id for t in rec.tracks]
heard = sorted({store.tracks[t].artist_id for t in fold.train.user_tracks(user)})
print(f"\nuser {store.users[user].user_id} listens to {heard}")
print(f"recommended artists: {artists}")

recs = recommend_all(table, fold.train, fold.heldout, k=50, candidate_pool=cfg.candidate_pool, seed=0)
print(f"\nhit@50 {hit_rate_at_k(recs, fold.heldout, 50):.3f}  mrr {mrr(recs, fold.heldout):.4f}")
