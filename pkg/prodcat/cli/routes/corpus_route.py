from pathlib import Path

import pandas as pd

from ...corpus import LEVELS, corpus_stats, load_harmonization_map, merge_augmentation, read_corpus, stratified_split
from ...utils.logger import logger
from ...utils.responses import success_response, to_json
from ..router import CommandRouter, arg, read_input

router = CommandRouter(tag="corpus")


@router.command(
    "preprocess",
    help="load, normalize and deduplicate a raw CSV",
    arguments=[
        arg("--input", required=True, help="raw ';'-delimited CSV"),
        arg("--output", required=True, help="cleaned CSV to write"),
        arg("--delimiter", setting="csv.delimiter", help="field delimiter (default ';')"),
        arg("--columns", setting="csv.columns", help="item,segment,category,subcategory,product headers"),
        arg("--rejects", help="optional CSV listing rejected rows"),
    ],
)
def preprocess(args, settings):
    """Clean one raw file into the corpus schema"""
    logger.info("Preprocess request received for %s", args.input)
    corpus, stats, loaded = read_corpus(args.input, settings.csv.columns, settings.csv.delimiter,
                                        settings.norm, threads=settings.threads)
    corpus.write_csv(args.output, settings.csv.columns, settings.csv.delimiter)
    if args.rejects:
        frame = pd.DataFrame(
            [(r.reason, r.source, "|".join(r.fields)) for r in loaded.rejected],
            columns=["reason", "source", "fields"],
        )
        Path(args.rejects).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.rejects, sep=settings.csv.delimiter, index=False, lineterminator="\n")

    counts = stats.as_dict()
    return success_response(
        "preprocess", "Corpus cleaned successfully",
        data={"output": args.output, **counts, "rejected": len(loaded.rejected)},
        metrics={"rows_in": counts["loaded"], "rows_out": counts["kept"]},
    )


@router.command(
    "split",
    help="stratified train/val/test split of a cleaned CSV",
    arguments=[
        arg("--input", required=True, help="cleaned CSV"),
        arg("--out-dir", required=True, help="directory for train.csv, val.csv, test.csv"),
        arg("--ratios", setting="split.ratios", help="train,val,test fractions summing to 1"),
        arg("--stratify-by", setting="split.stratify_by", choices=LEVELS, help="stratification level"),
    ],
)
def split(args, settings):
    """Partition a corpus per stratum with a seeded shuffle"""
    corpus, _ = read_input(settings, args.input)
    parts = stratified_split(corpus, settings.split)
    out_dir = Path(args.out_dir)
    sizes = {}
    for name, part in zip(("train", "val", "test"), parts):
        part.write_csv(out_dir / f"{name}.csv", settings.csv.columns, settings.csv.delimiter)
        sizes[name] = len(part)
    return success_response(
        "split", "Corpus split successfully",
        data={"out_dir": str(out_dir), "seed": settings.split.seed,
              "stratify_by": settings.split.stratify_level, "ratios": list(settings.split.ratios), **sizes},
        metrics=sizes,
    )


@router.command(
    "merge",
    help="append an augmentation corpus with label harmonization",
    arguments=[
        arg("--base", required=True, help="cleaned base CSV"),
        arg("--extra", required=True, help="augmentation CSV"),
        arg("--map", dest="map_path", help="from;to label harmonization CSV"),
        arg("--output", required=True, help="merged CSV to write"),
    ],
)
def merge(args, settings):
    """Rewrite extra's labels through the map, then concatenate and deduplicate"""
    base, _ = read_input(settings, args.base)
    extra, _ = read_input(settings, args.extra)
    mapping = load_harmonization_map(args.map_path, settings.csv.delimiter) if args.map_path else {}
    merged, stats = merge_augmentation(base, extra, mapping)
    merged.write_csv(args.output, settings.csv.columns, settings.csv.delimiter)
    return success_response(
        "merge", "Corpora merged successfully",
        data={
            "output": args.output, "base": stats.base, "extra": stats.extra, "merged": stats.merged,
            "mapped_labels": stats.mapped_labels,
            "unmapped_labels": [list(pair) for pair in stats.unmapped_labels],
            "new_labels": [list(pair) for pair in stats.new_labels],
        },
        metrics={"records": stats.merged, "unmapped": stats.unmapped_count},
    )


@router.command(
    "stats",
    help="label-space sizes and class balance of a CSV",
    arguments=[
        arg("--data", required=True, help="CSV to describe"),
        arg("--out", help="optional JSON file for the full statistics"),
    ],
)
def stats(args, settings):
    corpus, clean_stats = read_input(settings, args.data)
    summary = corpus_stats(corpus)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(to_json(summary) + "\n", encoding="utf-8")
    sizes = {level: summary["levels"][level]["classes"] for level in LEVELS}
    return success_response(
        "stats", "Corpus statistics computed",
        data={"records": summary["records"], "classes": sizes, "clean": clean_stats.as_dict(),
              "imbalance_ratio": {level: summary["levels"][level]["imbalance_ratio"] for level in LEVELS}},
        metrics={"records": summary["records"], **sizes},
    )
