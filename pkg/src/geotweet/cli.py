"""Command-line entry point tying ingestion, training, evaluation, analysis
and hashing into reproducible runs.

Config precedence: command-line flags > config file (key = value lines) >
defaults. Every artifact-producing subcommand writes its resolved config
and seed alongside the outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import hashing
from .archive import FORMAT_VERSION
from .fusion import predict_labels
from .model import (GeoModel, ModelConfig, batch_arrays, load_checkpoint,
                    save_checkpoint)
from .rbf_net import RbfNetwork, bin_weight_profile
from .text_net import top_attended_spans
from .trainer import (SyntheticConfig, TrainConfig, evaluate_accuracy,
                      generate_synthetic, synthetic_model_config, train)

MODEL_FILE = "model.gtpa"
CHAR_VOCAB_FILE = "char_vocab.txt"
TIMEZONE_FILE = "timezones.txt"
LABEL_FILE = "labels.txt"
RUN_CONFIG_FILE = "run_config.json"


def read_config_file(path):
    """Simple ``key = value`` text format; '#' starts a comment line."""
    values = {}
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {i}: expected 'key = value'")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config_file(args, argv):
    if not getattr(args, "config", None):
        return args
    file_values = read_config_file(args.config)
    # flags explicitly given on the command line win over the file
    given = {a.lstrip("-").replace("-", "_").split("=")[0]
             for a in argv if a.startswith("--")}
    for key, raw in file_values.items():
        if key in given or not hasattr(args, key):
            continue
        current = getattr(args, key)
        if isinstance(current, bool):
            setattr(args, key, raw.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, key, int(raw))
        elif isinstance(current, float):
            setattr(args, key, float(raw))
        else:
            setattr(args, key, raw)
    return args


def write_run_config(out_dir, args, extra=None):
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    resolved["format_version"] = FORMAT_VERSION
    if extra:
        resolved.update(extra)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / RUN_CONFIG_FILE, "w", encoding="utf-8") as f:
        json.dump(resolved, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


def model_config_from_args(args):
    if args.synthetic_scale:
        base = dataclasses.asdict(synthetic_model_config())
    else:
        base = dataclasses.asdict(ModelConfig())
        if args.feature_set == "message-only":
            base["text_out_size"] = 600
    base["feature_set"] = args.feature_set
    for key in ("text_max_len", "text_emb_size", "text_window", "text_out_size",
                "time_bins", "offset_bins", "timezone_emb_size", "loc_max_len",
                "loc_emb_size", "loc_span", "loc_out_size", "penultimate_dim",
                "account_bins", "dropout"):
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    if args.hashing:
        base["noise_sigma"] = args.noise_sigma
        base["extrema_alpha"] = args.extrema_alpha
    base["removed_features"] = tuple(
        args.remove_feature) if getattr(args, "remove_feature", None) else ()
    return ModelConfig(**base)


def encode_records(records, char_vocab, tz_vocab, label_vocab, config):
    return [corpus_mod.encode_example(r, char_vocab, tz_vocab, label_vocab,
                                      config.text_max_len, config.loc_max_len)
            for r in records]


def load_model_dir(model_dir):
    model_dir = Path(model_dir)
    model, meta = load_checkpoint(str(model_dir / MODEL_FILE))
    char_vocab = corpus_mod.CharVocabulary.load(model_dir / CHAR_VOCAB_FILE)
    tz_vocab = corpus_mod.CategoryVocabulary.load(model_dir / TIMEZONE_FILE)
    label_vocab = corpus_mod.CategoryVocabulary.load(model_dir / LABEL_FILE)
    return model, meta, char_vocab, tz_vocab, label_vocab


def _load_encoded(path, char_vocab, tz_vocab, label_vocab, config):
    records = corpus_mod.read_jsonl(path)
    return records, encode_records(records, char_vocab, tz_vocab, label_vocab,
                                   config)


# --- subcommands ------------------------------------------------------------


def cmd_synth(args):
    cfg = SyntheticConfig(
        n_cities=args.cities, n_train=args.train_size, n_dev=args.dev_size,
        n_test=args.test_size, seed=args.seed,
        location_informative=not args.uninformative_location,
        time_informative=not args.uninformative_time,
        timezone_informative=not args.uninformative_timezone,
        text_informative=args.informative_text)
    train_recs, dev_recs, test_recs = generate_synthetic(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus_mod.write_jsonl(out / "train.jsonl", train_recs)
    corpus_mod.write_jsonl(out / "dev.jsonl", dev_recs)
    corpus_mod.write_jsonl(out / "test.jsonl", test_recs)
    write_run_config(out, args)
    print(f"wrote {len(train_recs)}/{len(dev_recs)}/{len(test_recs)} records to {out}")
    return 0


def cmd_train(args):
    model_config = model_config_from_args(args)
    train_records = corpus_mod.filter_training(corpus_mod.read_jsonl(args.train))
    dev_records = corpus_mod.read_jsonl(args.dev)
    char_vocab = corpus_mod.build_char_vocab(
        (r.text + r.user_location for r in train_records),
        min_count=args.min_char_count)
    tz_vocab = corpus_mod.CategoryVocabulary(
        [r.timezone_name for r in train_records if r.timezone_name])
    label_vocab = corpus_mod.CategoryVocabulary(
        [r.city_label for r in train_records], with_unk=False)
    train_ex = encode_records(train_records, char_vocab, tz_vocab, label_vocab,
                              model_config)
    dev_ex = encode_records(dev_records, char_vocab, tz_vocab, label_vocab,
                            model_config)
    rng = np.random.default_rng(args.seed)
    model = GeoModel(model_config, len(char_vocab), len(tz_vocab),
                     len(label_vocab), rng)
    train_config = TrainConfig(batch_size=args.batch_size, epochs=args.epochs,
                               learning_rate=args.learning_rate, seed=args.seed)
    report = train(model, train_ex, dev_ex, train_config)
    if args.test:
        test_records = corpus_mod.read_jsonl(args.test)
        test_ex = encode_records(test_records, char_vocab, tz_vocab,
                                 label_vocab, model_config)
        report.test_accuracy = evaluate_accuracy(model, test_ex)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    char_vocab.save(out / CHAR_VOCAB_FILE)
    tz_vocab.save(out / TIMEZONE_FILE)
    label_vocab.save(out / LABEL_FILE)
    save_checkpoint(str(out / MODEL_FILE), model, seed=args.seed)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    write_run_config(out, args)
    print(report.to_text(), end="")
    return 0


def cmd_eval(args):
    model, _, char_vocab, tz_vocab, label_vocab = load_model_dir(args.model)
    _, examples = _load_encoded(args.data, char_vocab, tz_vocab, label_vocab,
                                model.config)
    accuracy = evaluate_accuracy(model, examples)
    print(f"accuracy\t{accuracy:.6f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "accuracy.txt").write_text(f"accuracy\t{accuracy:.6f}\n",
                                          encoding="utf-8")
        write_run_config(out, args)
    return 0


def cmd_ablate(args):
    from .trainer import ablate
    base_config = model_config_from_args(args)
    if base_config.feature_set != "tweet-user":
        print("ablate requires --feature-set tweet-user", file=sys.stderr)
        return 2
    train_records = corpus_mod.filter_training(corpus_mod.read_jsonl(args.train))
    dev_records = corpus_mod.read_jsonl(args.dev)
    test_records = corpus_mod.read_jsonl(args.test)
    char_vocab = corpus_mod.build_char_vocab(
        (r.text + r.user_location for r in train_records),
        min_count=args.min_char_count)
    tz_vocab = corpus_mod.CategoryVocabulary(
        [r.timezone_name for r in train_records if r.timezone_name])
    label_vocab = corpus_mod.CategoryVocabulary(
        [r.city_label for r in train_records], with_unk=False)
    train_ex = batch_arrays(encode_records(
        train_records, char_vocab, tz_vocab, label_vocab, base_config))
    dev_ex = batch_arrays(encode_records(
        dev_records, char_vocab, tz_vocab, label_vocab, base_config))
    test_ex = batch_arrays(encode_records(
        test_records, char_vocab, tz_vocab, label_vocab, base_config))

    def build(cfg, seed):
        return GeoModel(cfg, len(char_vocab), len(tz_vocab), len(label_vocab),
                        np.random.default_rng(seed))

    train_config = TrainConfig(batch_size=args.batch_size, epochs=args.epochs,
                               learning_rate=args.learning_rate, seed=args.seed)
    baseline, deltas = ablate(build, train_ex, dev_ex, test_ex, base_config,
                              train_config)
    lines = [f"all_features\t{baseline:.6f}\t-"]
    for feat, delta in deltas.items():
        lines.append(f"-{feat}\t{baseline + delta:.6f}\t{delta:+.6f}")
    table = "\n".join(lines) + "\n"
    print(table, end="")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.txt").write_text(table, encoding="utf-8")
    write_run_config(out, args)
    return 0


def cmd_attn(args):
    model, _, char_vocab, tz_vocab, label_vocab = load_model_dir(args.model)
    if "text" not in model.features:
        print("model has no text network", file=sys.stderr)
        return 2
    records, examples = _load_encoded(args.data, char_vocab, tz_vocab,
                                      label_vocab, model.config)
    arrays = batch_arrays(examples)
    lines = ["example\trank\tstart\tspan\tweight"]
    window = model.config.text_window
    for start in range(0, len(records), 512):
        batch = {k: v[start:start + 512] for k, v in arrays.items()}
        _, _, attention = model.forward(batch, train=False)
        for j in range(len(batch["label_id"])):
            i = start + j
            padded = records[i].text[:model.config.text_max_len].ljust(
                model.config.text_max_len)
            spans = top_attended_spans(padded, attention[j], window, k=args.top_k)
            for rank, (pos, substring, weight) in enumerate(spans, start=1):
                lines.append(f"{i}\t{rank}\t{pos}\t{substring!r}\t{weight:.6f}")
    report = "\n".join(lines) + "\n"
    print(report, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "attention.txt").write_text(report, encoding="utf-8")
        write_run_config(out, args)
    return 0


_TIME_FEATURES = {"tweet_time": ("time", "tweet_time"),
                  "utc_offset": ("offset", "utc_offset"),
                  "account_time": ("account", "account_time")}


def cmd_time_profile(args):
    model, _, char_vocab, tz_vocab, label_vocab = load_model_dir(args.model)
    if args.feature not in _TIME_FEATURES:
        print(f"unknown time feature {args.feature!r}", file=sys.stderr)
        return 2
    if args.feature not in model.features:
        print(f"model has no {args.feature} network", file=sys.stderr)
        return 2
    _, examples = _load_encoded(args.data, char_vocab, tz_vocab, label_vocab,
                                model.config)
    arrays = batch_arrays(examples)
    net = model.nets[args.feature]
    _, column = _TIME_FEATURES[args.feature]
    acts = net.forward(arrays[column]).data
    mu = net.params[f"{net.prefix}.mu"].data
    sigma = net.params[f"{net.prefix}.sigma"].data
    lines = ["city\tbin_index\tmu\tsigma\tmean_weight\texcluded"]
    id_to_label = {i: n for n, i in label_vocab.name_to_id.items()}
    for label_id in sorted(set(arrays["label_id"].tolist())):
        mask = arrays["label_id"] == label_id
        means, excluded = bin_weight_profile(acts[mask])
        city = id_to_label.get(label_id, str(label_id))
        for b in range(len(mu)):
            lines.append(f"{city}\t{b}\t{mu[b]:.6f}\t{sigma[b]:.6f}"
                         f"\t{means[b]:.6f}\t{int(excluded[b])}")
    report = "\n".join(lines) + "\n"
    print(report, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "time_profile.txt").write_text(report, encoding="utf-8")
        write_run_config(out, args)
    return 0


def cmd_hash(args):
    model, _, char_vocab, tz_vocab, label_vocab = load_model_dir(args.model)
    _, examples = _load_encoded(args.data, char_vocab, tz_vocab, label_vocab,
                                model.config)
    codes = hashing.encode_code_set(model, examples)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    hashing.save_codes(out, codes)
    write_run_config(out.parent, args)
    print(f"wrote {len(codes)} codes of width {codes.width} to {out}")
    return 0


def cmd_retrieve(args):
    test = hashing.load_codes(args.test_codes)
    dev = hashing.load_codes(args.dev_codes)
    mean_ap, excluded = hashing.map_from_codes(test, dev)
    report = (f"map\t{mean_ap:.6f}\n"
              f"queries\t{len(test) - excluded}\n"
              f"excluded\t{excluded}\n")
    print(report, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "map_report.txt").write_text(report, encoding="utf-8")
        write_run_config(out, args)
    return 0


def cmd_lsh(args):
    model, _, char_vocab, tz_vocab, label_vocab = load_model_dir(args.model)
    _, examples = _load_encoded(args.data, char_vocab, tz_vocab, label_vocab,
                                model.config)
    features = hashing.raw_feature_matrix(examples, len(char_vocab),
                                          len(tz_vocab))
    rng = np.random.default_rng(args.seed)
    lsh = hashing.LshModel(args.bits, features.shape[1], rng)
    codes = hashing.CodeSet(
        bits=lsh.encode(features),
        ids=np.arange(len(examples), dtype=np.int64),
        labels=np.array([e.label_id for e in examples], dtype=np.int64))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    hashing.save_codes(out, codes)
    write_run_config(out.parent, args)
    print(f"wrote {len(codes)} LSH codes of width {codes.width} to {out}")
    return 0


def cmd_hist(args):
    model, _, char_vocab, tz_vocab, label_vocab = load_model_dir(args.model)
    _, examples = _load_encoded(args.data, char_vocab, tz_vocab, label_vocab,
                                model.config)
    reps, _ = hashing.compute_representations(model, examples)
    counts, edges, masses = hashing.r_histogram(reps, args.bins)
    lines = ["bin_lo\tbin_hi\tcount"]
    for i, c in enumerate(counts):
        lines.append(f"{edges[i]:.6f}\t{edges[i + 1]:.6f}\t{int(c)}")
    for k, v in masses.items():
        lines.append(f"mass_{k}\t-\t{v:.6f}")
    report = "\n".join(lines) + "\n"
    print(report, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "r_histogram.txt").write_text(report, encoding="utf-8")
        write_run_config(out, args)
    return 0


# --- argument parsing -------------------------------------------------------


def _add_model_flags(p):
    p.add_argument("--feature-set", choices=["message-only", "tweet-user"],
                   default="tweet-user")
    p.add_argument("--synthetic-scale", action="store_true",
                   help="use small hyper-parameters sized for synthetic data")
    for key in ("text-max-len", "text-emb-size", "text-window", "text-out-size",
                "time-bins", "offset-bins", "timezone-emb-size", "loc-max-len",
                "loc-emb-size", "loc-span", "loc-out-size", "penultimate-dim",
                "account-bins"):
        p.add_argument(f"--{key}", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--hashing", action="store_true",
                   help="train with noise and extrema loss for binarization")
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--extrema-alpha", type=float, default=0.1)
    p.add_argument("--remove-feature", action="append", default=None)


def _add_train_flags(p):
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--min-char-count", type=int,
                   default=corpus_mod.DEFAULT_MIN_COUNT)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="geotweet",
        description="Tweet geolocation classifier with binary hashing")
    sub = parser.add_subparsers(dest="command", required=True)

    def new(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=fn)
        return p

    p = new("synth", cmd_synth, help="generate a synthetic labeled corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--cities", type=int, default=20)
    p.add_argument("--train-size", type=int, default=10000)
    p.add_argument("--dev-size", type=int, default=1000)
    p.add_argument("--test-size", type=int, default=1000)
    p.add_argument("--uninformative-location", action="store_true")
    p.add_argument("--uninformative-time", action="store_true")
    p.add_argument("--uninformative-timezone", action="store_true")
    p.add_argument("--informative-text", action="store_true")

    p = new("train", cmd_train, help="train a model")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test")
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    _add_train_flags(p)

    p = new("eval", cmd_eval, help="evaluate accuracy of a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")

    p = new("ablate", cmd_ablate, help="feature ablation via retraining")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    _add_train_flags(p)

    p = new("attn", cmd_attn, help="top attended character spans per example")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--out")

    p = new("time-profile", cmd_time_profile,
            help="per-city RBF bin-weight profile")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--feature", default="tweet_time")
    p.add_argument("--out")

    p = new("hash", cmd_hash, help="binarize representations to a code file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = new("retrieve", cmd_retrieve, help="Hamming retrieval MAP report")
    p.add_argument("--test-codes", required=True)
    p.add_argument("--dev-codes", required=True)
    p.add_argument("--out")

    p = new("lsh", cmd_lsh, help="LSH baseline codes over raw input features")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--bits", type=int, default=100)
    p.add_argument("--out", required=True)

    p = new("hist", cmd_hist, help="histogram of penultimate values")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--out")

    return parser


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(args, argv)
        return args.func(args)
    except (ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
