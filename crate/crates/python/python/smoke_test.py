"""Exercises the extension end to end. Run with the built module on sys.path."""

import os
import tempfile

import logsieve


def main():
    assert logsieve.tokenize("Task 12 finished in 0.5 s") == ["Task", "*", "finished", "in", "*", "s"]
    assert logsieve.tokenize("   ") is None

    train = [
        [f"Task {i} finished in {i / 10} s" for i in range(50)]
        + [f"Registered executor on host node{i % 4} port 40{i}" for i in range(30)],
        [f"Task {i} finished in {i} s" for i in range(40)],
    ]
    parsed = logsieve.parse(train)
    assert parsed["preprocessed"] >= 2, parsed
    assert parsed["quality_loss"] >= 0.0

    cfg = logsieve.Config(coverage_fraction=1.0, gamma=3)
    assert cfg.gamma == 3 and cfg.alpha == 0.65
    model = logsieve.train(train, cfg)
    assert len(model) >= 2
    assert model.match_line("Task 7 finished in 9 s") is not None
    assert model.match_line("kernel panic not syncing") is None
    assert 0.0 <= model.quality_loss() <= 0.01

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.jsonl")
        model.save(path)
        again = logsieve.Model.load(path)
        assert again.patterns() == model.patterns()

    report = model.filter(["Task 1 finished in 2 s", "", "disk quota exceeded on volume sda"], config=cfg)
    assert report["anomalies"] == [(3, "disk quota exceeded on volume sda")], report
    assert report["totals"]["blank"] == 1

    enc = logsieve.encode("disk quota exceeded on volume sda after 120 writes", frequency=4)
    assert enc.frequency == 4 and 0 < enc.fill_ratio < 0.25
    assert enc.jaccard(enc) == 1.0
    store = logsieve.aggregate([(enc, "tenant-a")] + [(e, "tenant-b") for e in model.encode()], coverage=1.0)
    assert store.matches("disk quota exceeded on volume sda after 7 writes")
    assert not store.matches("disk quota exceeded on volume sdb")
    report = model.filter(["disk quota exceeded on volume sda after 9 writes"], encodings=store, config=cfg)
    assert report["anomalies"] == [] and report["totals"]["matched_by_encoding"] == 1

    try:
        logsieve.Config(alpha=2.0)
    except ValueError:
        pass
    else:
        raise AssertionError("alpha 2.0 accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
