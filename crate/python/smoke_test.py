#!/usr/bin/env python3
"""Smoke test for the switchrl_py extension module.

Build the module first, then run this script:

    cargo build -p switchrl-py --release
    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_extension():
    candidates = [
        REPO / "target" / "release" / "libswitchrl_py.so",
        REPO / "target" / "debug" / "libswitchrl_py.so",
        REPO / "target" / "release" / "libswitchrl_py.dylib",
        REPO / "target" / "debug" / "libswitchrl_py.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("extension not built; run: cargo build -p switchrl-py --release")
    stage = Path(tempfile.mkdtemp(prefix="switchrl_py_"))
    shutil.copy(built, stage / "switchrl_py.so")
    sys.path.insert(0, str(stage))
    import switchrl_py

    return switchrl_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    m = import_extension()

    # Expectile loss: |tau - 1[u<0]| u^2.
    approx(m.expectile_loss(2.0, 0.9), 3.6)
    approx(m.expectile_loss(-2.0, 0.9), 0.4)

    # PEX weights match the direct softmax over Q/alpha.
    w = m.pex_weights([1.0, 3.0], 1.0)
    e2 = math.exp(2.0)
    approx(w[0], 1.0 / (1.0 + e2), 1e-12)
    approx(w[1], e2 / (1.0 + e2), 1e-12)
    approx(sum(m.pex_weights([4.2, -1.3], 0.07)), 1.0, 1e-9)

    # Promise window: k=2, gamma=0.5, V=(10,.,3), rewards (2,1) -> 6.75.
    win = m.PromiseWindow(2, 0.5)
    win.push(10.0, 999.0)  # leading reward falls off the ring
    win.push(0.0, 2.0)
    win.push(3.0, 1.0)
    assert win.is_filled()
    approx(win.discrepancy(), 6.75, 1e-12)
    win.push(0.0, 0.0, True)  # episode boundary clears the window
    assert not win.is_filled()

    # Homeostasis tracks its target rate on a constant signal.
    homeo = m.Homeo(0.05, seed=3)
    fires = sum(homeo.update(1.0) for _ in range(20000))
    rate = fires / 20000
    assert abs(rate - 0.05) < 0.01, rate
    assert homeo.t == 20000
    assert '"rho":0.05' in homeo.to_json().replace(" ", "")

    # Replay buffer round-trips through the binary record stream.
    buf = m.ReplayBuffer(4, 2, 100)
    buf.push(0, 1, 0.5, 1, False)
    buf.push(1, 0, 1.0, 0, True)
    blob = buf.to_bytes()
    assert len(blob) == 8 + 2 * 21
    back = m.ReplayBuffer.from_bytes(blob, 4, 2, 100)
    assert len(back) == 2
    assert back.sample(3, seed=0) == back.sample(3, seed=0)

    # Environment parsing, oracles, dataset generation.
    env = m.Environment("max_steps = 20\nS...\n...G\n")
    assert env.num_states == 8 and env.num_actions == 4
    assert env.optimal_return() == 1.0
    reward, next_state, done = env.step(0, 3, seed=1)
    assert (reward, next_state, done) == (0.0, 1, False)
    data = env.generate_dataset("random", 500, seed=0)
    assert len(data) == 500

    # End-to-end: pretrain then a short online run, deterministic by seed.
    ckpt = m.pretrain(
        "max_steps = 20\nS...\n...G\n",
        "medium",
        dataset_size=1500,
        offline_iters=4000,
        seed=0,
        discount=0.95,
    )
    assert len(ckpt.digest()) == 16
    assert ckpt.optimal_return > ckpt.random_return
    assert abs(sum(ckpt.policy_probs(0)) - 1.0) < 1e-9

    rows = m.run_online(
        ckpt,
        "nonmono",
        seed=0,
        online_steps=2000,
        eval_interval=500,
        eval_episodes=4,
        initial_collection_steps=100,
        gamma=0.95,
    )
    assert len(rows) == 4
    for row in rows:
        step, controller, seed = row[0], row[1], row[2]
        offline_count, online_count = row[4], row[5]
        assert controller == "nonmono" and seed == 0
        assert offline_count + online_count == step
    assert rows == m.run_online(
        ckpt,
        "nonmono",
        seed=0,
        online_steps=2000,
        eval_interval=500,
        eval_episodes=4,
        initial_collection_steps=100,
        gamma=0.95,
    )

    csv = m.rows_csv(rows)
    assert csv.splitlines()[0] == ",".join(m.ROW_FIELDS)
    assert len(csv.splitlines()) == 5

    # Checkpoint file round-trip.
    with tempfile.TemporaryDirectory() as d:
        path = str(Path(d) / "ckpt.bin")
        ckpt.save(path)
        loaded = m.Checkpoint.load(path)
        assert loaded.digest() == ckpt.digest()

    print("smoke test OK")


if __name__ == "__main__":
    main()
