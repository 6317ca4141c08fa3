"""Expected dataset statistics for tests/data/stats_records.csv.

A zero word count in the principle or safety column means the section is absent.
"""
import json
import sys

import pandas as pd


def split(df):
    prin = df[df.principle_words > 0].principle_words
    safe = df[df.safety_words > 0].safety_words
    return {
        "clip_count": int(len(df)),
        "video_count": int(df.video_id.nunique()),
        "mean_duration": float(((df.end_ms - df.start_ms) / 1000).mean()),
        "steps_per_video": float(len(df) / df.video_id.nunique()),
        "mean_text_length": float((df.procedure_words + df.principle_words + df.safety_words).mean()),
        "mean_procedure_length": float(df.procedure_words.mean()),
        "mean_principle_length": float(prin.mean()) if len(prin) else None,
        "mean_safety_length": float(safe.mean()) if len(safe) else None,
        "principle_rate": float((df.principle_words > 0).mean()),
        "safety_rate": float((df.safety_words > 0).mean()),
    }


def main(path):
    df = pd.read_csv(path)
    out = split(df)
    out["per_discipline"] = {d: split(g) for d, g in sorted(df.groupby("discipline"))}
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data/stats_records.csv")
