"""Smoke test for the ndqn extension: train, evaluate, compare, converse."""

import json
import sys
import tempfile
from pathlib import Path

import ndqn

TINY = 'budget = 300\ncheckpoint_every = 100\neval_episodes = 5\n'


def main() -> int:
    assert ndqn.tokenize("Hello, World!") == ["hello", "world"]
    s, _, p = ndqn.mann_kendall([1.0, 2.0, 3.0, 4.0, 5.0])
    assert s == 10.0 and p < 0.05

    with tempfile.TemporaryDirectory() as tmp:
        run_a = Path(tmp) / "tiny"
        run_b = Path(tmp) / "flat"
        report = json.loads(ndqn.train(TINY, str(run_a)))
        assert report["label"] == "ndqn/delex_syn"
        assert report["budget"] == 300
        assert (run_a / "metrics.csv").is_file()
        json.loads(ndqn.train(TINY + 'mode = "dqn_flat"\n', str(run_b)))

        summary = json.loads(ndqn.evaluate(str(run_a), episodes=4, seed=1))
        assert summary["episodes"] == 4
        assert 0.0 <= summary["avg_success"] <= 1.0

        cmp = json.loads(ndqn.compare(str(run_a), str(run_b)))
        assert cmp["budget"] == 300 and cmp["speedup"] > 0

        try:
            ndqn.train("budget = 0\n")
        except ValueError:
            pass
        else:
            raise AssertionError("zero budget accepted")

        sessions = ndqn.Sessions(tmp)
        assert sessions.checkpoints() == ["flat", "tiny"]
        opened = json.loads(sessions.create("tiny"))
        assert opened["turn"]["speaker"] == "system"
        reply = json.loads(sessions.post(opened["session_id"], "a cheap hotel in edinburgh"))
        assert reply["turn"]["index"] == 2
        assert len(json.loads(sessions.transcript(opened["session_id"]))) == 3
        try:
            sessions.create("missing")
        except KeyError:
            pass
        else:
            raise AssertionError("missing checkpoint accepted")

    print("python smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
