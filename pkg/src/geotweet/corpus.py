"""Tweet metadata ingestion, vocabularies and example encoding."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone

PAD_ID = 0
UNK_ID = 1

MIN_TRAIN_TEXT_CHARS = 5
DEFAULT_MIN_COUNT = 5

# UTC offsets are assumed to span -12h..+14h
OFFSET_MIN_HOURS = -12.0
OFFSET_RANGE_HOURS = 26.0
MISSING_OFFSET_VALUE = 0.5

VOCAB_FORMAT_VERSION = 1


@dataclass
class TweetRecord:
    text: str
    created_at: datetime
    utc_offset_seconds: int | None
    timezone_name: str | None
    user_location: str
    account_created_at: datetime
    city_label: str


@dataclass
class EncodedExample:
    text_ids: list[int]
    location_ids: list[int]
    tweet_time: float
    account_time: float
    utc_offset: float
    timezone_id: int
    label_id: int


class CharVocabulary:
    """Characters seen >= min_count times in training text, plus PAD/UNK."""

    def __init__(self, counts, min_count):
        if min_count < 1:
            raise ValueError(f"min_count must be >= 1, got {min_count}")
        self.min_count = min_count
        self.counts = {c: n for c, n in counts.items() if n >= min_count}
        # deterministic id order: frequency desc, then codepoint
        ordered = sorted(self.counts, key=lambda c: (-self.counts[c], c))
        self.char_to_id = {c: i + 2 for i, c in enumerate(ordered)}
        self.pad_id = PAD_ID
        self.unk_id = UNK_ID

    def __len__(self):
        return len(self.char_to_id) + 2

    def lookup(self, char):
        return self.char_to_id.get(char, self.unk_id)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"charvocab\t{VOCAB_FORMAT_VERSION}\t{self.min_count}\n")
            for c in sorted(self.char_to_id, key=self.char_to_id.get):
                f.write(f"U+{ord(c):04X}\t{self.counts[c]}\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            header = f.readline().rstrip("\n").split("\t")
            if len(header) != 3 or header[0] != "charvocab":
                raise ValueError(f"{path}: not a character vocabulary file")
            if int(header[1]) != VOCAB_FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported vocabulary version {header[1]}")
            min_count = int(header[2])
            counts = {}
            for line in f:
                code, n = line.rstrip("\n").split("\t")
                counts[chr(int(code[2:], 16))] = int(n)
        return cls(counts, min_count)


class CategoryVocabulary:
    """Contiguous ids for category strings (timezones, city labels)."""

    def __init__(self, names, with_unk=True):
        uniq = sorted(set(names))
        self.name_to_id = {n: i for i, n in enumerate(uniq)}
        self.unk_id = len(uniq) if with_unk else None

    def __len__(self):
        return len(self.name_to_id) + (1 if self.unk_id is not None else 0)

    def lookup(self, name):
        if name is None:
            if self.unk_id is None:
                raise KeyError("missing category with no UNK id")
            return self.unk_id
        hit = self.name_to_id.get(name)
        if hit is not None:
            return hit
        if self.unk_id is None:
            raise KeyError(f"unknown category {name!r}")
        return self.unk_id

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"catvocab\t{VOCAB_FORMAT_VERSION}\t{int(self.unk_id is not None)}\n")
            for n in sorted(self.name_to_id, key=self.name_to_id.get):
                f.write(n + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            header = f.readline().rstrip("\n").split("\t")
            if len(header) != 3 or header[0] != "catvocab":
                raise ValueError(f"{path}: not a category vocabulary file")
            names = [line.rstrip("\n") for line in f]
        return cls(names, with_unk=bool(int(header[2])))


def build_char_vocab(training_texts, min_count=DEFAULT_MIN_COUNT):
    counts = Counter()
    n_texts = 0
    for text in training_texts:
        n_texts += 1
        counts.update(text)
    if n_texts == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    return CharVocabulary(counts, min_count)


def filter_training(records):
    """Drop training records with text shorter than 5 characters.

    Applies to the training partition only; dev/test stay untouched.
    """
    return [r for r in records if len(r.text) >= MIN_TRAIN_TEXT_CHARS]


def encode_text(text, vocab, max_len):
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    ids = [vocab.lookup(c) for c in text[:max_len]]
    ids.extend([vocab.pad_id] * (max_len - len(ids)))
    return ids


def normalize_time_of_day(ts):
    """Fraction of the UTC day elapsed; the date component is discarded."""
    ts = ts.astimezone(timezone.utc) if ts.tzinfo else ts
    seconds = ts.hour * 3600 + ts.minute * 60 + ts.second + ts.microsecond / 1e6
    return seconds / 86400.0


def normalize_utc_offset(offset_seconds):
    """Map offsets in hours from [-12, +14] onto [0, 1], clamped."""
    if offset_seconds is None:
        return MISSING_OFFSET_VALUE
    hours = offset_seconds / 3600.0
    return min(1.0, max(0.0, (hours - OFFSET_MIN_HOURS) / OFFSET_RANGE_HOURS))


def encode_example(record, char_vocab, timezone_vocab, label_vocab,
                   text_max_len, location_max_len):
    return EncodedExample(
        text_ids=encode_text(record.text, char_vocab, text_max_len),
        location_ids=encode_text(record.user_location, char_vocab, location_max_len),
        tweet_time=normalize_time_of_day(record.created_at),
        account_time=normalize_time_of_day(record.account_created_at),
        utc_offset=normalize_utc_offset(record.utc_offset_seconds),
        timezone_id=timezone_vocab.lookup(record.timezone_name),
        label_id=label_vocab.lookup(record.city_label),
    )


def _parse_timestamp(value, field, line_no=None):
    where = f" (line {line_no})" if line_no is not None else ""
    if isinstance(value, (int, float)):
        return datetime.fromtimestamp(value, tz=timezone.utc)
    if isinstance(value, str):
        try:
            ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
        except ValueError:
            raise ValueError(f"unparseable timestamp in field {field!r}{where}: {value!r}") from None
        return ts if ts.tzinfo else ts.replace(tzinfo=timezone.utc)
    raise ValueError(f"unparseable timestamp in field {field!r}{where}: {value!r}")


def record_from_dict(obj, line_no=None):
    return TweetRecord(
        text=obj.get("text", ""),
        created_at=_parse_timestamp(obj["created_at"], "created_at", line_no),
        utc_offset_seconds=obj.get("utc_offset"),
        timezone_name=obj.get("timezone"),
        user_location=obj.get("user_location") or "",
        account_created_at=_parse_timestamp(
            obj["account_created_at"], "account_created_at", line_no),
        city_label=obj.get("city_label", ""),
    )


def record_to_dict(record):
    return {
        "text": record.text,
        "created_at": record.created_at.isoformat(),
        "utc_offset": record.utc_offset_seconds,
        "timezone": record.timezone_name,
        "user_location": record.user_location,
        "account_created_at": record.account_created_at.isoformat(),
        "city_label": record.city_label,
    }


def read_jsonl(path):
    """Load TweetRecords from a JSON-lines file; errors carry line numbers."""
    records = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}: malformed JSON on line {i}: {e}") from None
            try:
                records.append(record_from_dict(obj, line_no=i))
            except KeyError as e:
                raise ValueError(f"{path}: line {i} missing field {e}") from None
    return records


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(record_to_dict(r), ensure_ascii=False) + "\n")
