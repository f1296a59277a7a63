"""Full geolocation model: feature subnetworks plus fusion classifier."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .archive import load_archive, save_archive
from .fusion import FusionClassifier, extrema_loss
from .loc_net import LocConvNetwork, TimezoneEmbedding
from .rbf_net import RbfNetwork
from .text_net import TextNetwork

FEATURE_ORDER = ("text", "tweet_time", "utc_offset", "timezone", "location",
                 "account_time")

MESSAGE_ONLY = "message-only"
TWEET_USER = "tweet-user"

CHECKPOINT_META_VERSION = 1


@dataclass
class ModelConfig:
    """Hyper-parameters; defaults follow the tweet+user setting."""

    feature_set: str = TWEET_USER
    removed_features: tuple = ()
    text_max_len: int = 300
    text_emb_size: int = 200
    text_window: int = 10
    text_out_size: int = 400
    text_attn_size: int | None = None
    time_bins: int = 50
    offset_bins: int = 50
    timezone_emb_size: int = 50
    loc_max_len: int = 20
    loc_emb_size: int = 300
    loc_span: int = 3
    loc_out_size: int = 300
    penultimate_dim: int = 400
    account_bins: int = 10
    noise_sigma: float = 0.0
    extrema_alpha: float = 0.0
    dropout: float = 0.2

    def __post_init__(self):
        if self.feature_set not in (MESSAGE_ONLY, TWEET_USER):
            raise ValueError(f"unknown feature set {self.feature_set!r}")
        self.removed_features = tuple(self.removed_features)
        for f in self.removed_features:
            if f not in self.active_features(ignore_removed=True):
                raise ValueError(f"cannot remove feature {f!r}: not in the model")

    def active_features(self, ignore_removed=False):
        feats = FEATURE_ORDER if self.feature_set == TWEET_USER else ("text",)
        if ignore_removed:
            return feats
        return tuple(f for f in feats if f not in self.removed_features)

    @classmethod
    def message_only_defaults(cls, **overrides):
        overrides.setdefault("text_out_size", 600)
        return cls(feature_set=MESSAGE_ONLY, **overrides)


class GeoModel:
    """Assembles the active subnetworks and the fusion classifier."""

    def __init__(self, config, char_vocab_size, n_timezones, n_classes, rng):
        self.config = config
        self.char_vocab_size = char_vocab_size
        self.n_timezones = n_timezones
        self.n_classes = n_classes
        self.features = config.active_features()
        if not self.features:
            raise ValueError("model has no active features")
        self.nets = {}
        self.params = {}
        dims = []
        for feat in self.features:
            net, dim = self._build_feature(feat, config, rng)
            self.nets[feat] = net
            self.params.update(net.params)
            dims.append(dim)
        self.fusion = FusionClassifier(rng, sum(dims), config.penultimate_dim,
                                       n_classes)
        self.params.update(self.fusion.params)

    def _build_feature(self, feat, cfg, rng):
        if feat == "text":
            net = TextNetwork(rng, self.char_vocab_size, cfg.text_emb_size,
                              cfg.text_out_size, cfg.text_window,
                              cfg.text_attn_size)
            return net, cfg.text_out_size
        if feat == "tweet_time":
            return RbfNetwork(cfg.time_bins, "time"), cfg.time_bins
        if feat == "utc_offset":
            return RbfNetwork(cfg.offset_bins, "offset"), cfg.offset_bins
        if feat == "timezone":
            net = TimezoneEmbedding(rng, self.n_timezones, cfg.timezone_emb_size)
            return net, cfg.timezone_emb_size
        if feat == "location":
            net = LocConvNetwork(rng, self.char_vocab_size, cfg.loc_emb_size,
                                 cfg.loc_span, cfg.loc_out_size)
            return net, cfg.loc_out_size
        if feat == "account_time":
            return RbfNetwork(cfg.account_bins, "account"), cfg.account_bins
        raise ValueError(f"unknown feature {feat!r}")

    def forward(self, batch, train=False, rng=None):
        """Returns (probs, r, attention) for a batch-array dict."""
        vectors = []
        attention = None
        for feat in self.features:
            net = self.nets[feat]
            if feat == "text":
                vec, attn = net.forward(batch["text_ids"])
                attention = attn.data
            elif feat == "tweet_time":
                vec = net.forward(batch["tweet_time"])
            elif feat == "utc_offset":
                vec = net.forward(batch["utc_offset"])
            elif feat == "timezone":
                vec = net.forward(batch["timezone_id"])
            elif feat == "location":
                vec = net.forward(batch["location_ids"])
            else:
                vec = net.forward(batch["account_time"])
            vectors.append(vec)
        cfg = self.config
        fused = self.fusion.fuse(vectors, noise_sigma=cfg.noise_sigma,
                                 dropout_keep=1.0 - cfg.dropout,
                                 train=train, rng=rng)
        r = self.fusion.penultimate(fused)
        probs = self.fusion.classify(r)
        return probs, r, attention

    def loss(self, batch, train=False, rng=None):
        probs, r, _ = self.forward(batch, train=train, rng=rng)
        total = ad.cross_entropy(probs, batch["label_id"])
        if self.config.extrema_alpha > 0.0:
            total = ad.add(total, extrema_loss(r, self.config.extrema_alpha))
        return total, probs, r

    def clamp(self):
        """Post-step parameter constraints (RBF width floors)."""
        for net in self.nets.values():
            if isinstance(net, RbfNetwork):
                net.clamp_sigma()

    def param_arrays(self):
        return {k: p.data for k, p in self.params.items()}

    def load_param_arrays(self, arrays):
        for name, p in self.params.items():
            if name not in arrays:
                raise ValueError(f"checkpoint missing parameter {name!r}")
            if arrays[name].shape != p.data.shape:
                raise ValueError(
                    f"checkpoint parameter {name!r} has shape "
                    f"{arrays[name].shape}, model expects {p.data.shape}")
            p.data[...] = arrays[name]


def batch_arrays(examples):
    """Column-major arrays for a list of EncodedExamples."""
    return {
        "text_ids": np.array([e.text_ids for e in examples], dtype=np.int64),
        "location_ids": np.array([e.location_ids for e in examples], dtype=np.int64),
        "tweet_time": np.array([e.tweet_time for e in examples]),
        "account_time": np.array([e.account_time for e in examples]),
        "utc_offset": np.array([e.utc_offset for e in examples]),
        "timezone_id": np.array([e.timezone_id for e in examples], dtype=np.int64),
        "label_id": np.array([e.label_id for e in examples], dtype=np.int64),
    }


def save_checkpoint(path, model, seed=None):
    save_archive(path, model.param_arrays())
    meta = {
        "meta_version": CHECKPOINT_META_VERSION,
        "config": asdict(model.config),
        "char_vocab_size": model.char_vocab_size,
        "n_timezones": model.n_timezones,
        "n_classes": model.n_classes,
        "seed": seed,
    }
    meta["config"]["removed_features"] = list(model.config.removed_features)
    with open(f"{path}.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_checkpoint(path):
    """Rebuild a model from an archive plus its JSON sidecar."""
    with open(f"{path}.json", encoding="utf-8") as f:
        meta = json.load(f)
    if meta.get("meta_version") != CHECKPOINT_META_VERSION:
        raise ValueError(f"{path}.json: unsupported checkpoint metadata version")
    config = ModelConfig(**meta["config"])
    rng = np.random.default_rng(0)  # weights overwritten below
    model = GeoModel(config, meta["char_vocab_size"], meta["n_timezones"],
                     meta["n_classes"], rng)
    model.load_param_arrays(load_archive(path))
    return model, meta
