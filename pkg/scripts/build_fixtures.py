"""Regenerate the files bundled under src/editgauge/data.

    python3 scripts/build_fixtures.py
"""
import bz2
import io
import shutil

from editgauge.corpus import split_corpus, write_corpus, write_dump
from editgauge.fixtures import DATA_DIR, mini_history, separable_corpus, write_ores_cache


def main():
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    revs = mini_history(200, seed=7)
    buf = io.StringIO()
    write_dump(revs, buf)
    with bz2.open(DATA_DIR / "mini_dump.xml.bz2", "wb") as fh:
        fh.write(buf.getvalue().encode("utf-8"))
    cache = DATA_DIR / "ores_cache"
    shutil.rmtree(cache, ignore_errors=True)
    write_ores_cache(revs, cache)
    write_corpus(separable_corpus(32, seed=0), DATA_DIR / "overfit_corpus.jsonl")
    write_corpus(split_corpus(separable_corpus(80, seed=5, split=None), seed=0), DATA_DIR / "sweep_corpus.jsonl")
    print(f"wrote {len(revs)} revisions and their cached scores to {DATA_DIR}")


if __name__ == "__main__":
    main()
