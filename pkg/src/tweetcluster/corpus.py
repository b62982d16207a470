"""Tweet ingestion, cleaning, tokenization and per-channel statistics."""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

TIMESTAMP_FORMAT = "%a %b %d %H:%M:%S %z %Y"

# File stems of the public health-news dataset mapped to display names.
CHANNEL_NAMES = {
    "bbchealth": "BBC Health",
    "cbchealth": "CBC Health",
    "cnnhealth": "CNN Health",
    "everydayhealth": "Everyday Health",
    "foxnewshealth": "Fox News Health",
    "gdnhealthcare": "Guardian Healthcare",
    "goodhealth": "Goodhealth",
    "kaiserhealthnews": "Kaiser Health",
    "latimeshealth": "LA Times Health",
    "msnhealthnews": "MSN Health",
    "nbchealth": "NBC Health",
    "nprhealth": "NPR Health",
    "nytimeshealth": "NY Times Health",
    "reuters_health": "Reuters Health",
    "usnewshealth": "US News Health",
    "wsjhealth": "WSJ Health",
}

_URL_SCHEME = re.compile(r"\bhttps?\S*", re.IGNORECASE)
# bare shortener / domain links such as "t.co/x1" or "bbc.in/1CimpJF"
_URL_BARE = re.compile(
    r"(?<!\S)(?:www\.)?[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}/\S*"
)
_LEADING_RT = re.compile(r"^\s*RT(?=\s|$)")
_MENTION = re.compile(r"@\w*")
_WS = re.compile(r"\s+")

EDGE_PUNCTUATION = ".,!?;:\"'()[]"


class CorpusError(ValueError):
    """Raised on malformed or empty corpus input."""


@dataclass(frozen=True)
class Tweet:
    id: str
    channel: str
    timestamp: datetime
    raw_text: str
    clean_text: str
    tokens: tuple[str, ...]

    @property
    def is_empty(self) -> bool:
        """True when nothing survived cleaning."""
        return not self.tokens

    def to_json(self) -> str:
        record = asdict(self)
        record["timestamp"] = self.timestamp.isoformat()
        record["tokens"] = list(self.tokens)
        return json.dumps(record, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "Tweet":
        record = json.loads(line)
        return cls(
            id=record["id"],
            channel=record["channel"],
            timestamp=datetime.fromisoformat(record["timestamp"]),
            raw_text=record["raw_text"],
            clean_text=record["clean_text"],
            tokens=tuple(record["tokens"]),
        )


@dataclass
class ChannelStats:
    tweet_count: int = 0
    word_count: int = 0
    vocabulary: set = field(default_factory=set, repr=False)

    @property
    def unique_word_count(self) -> int:
        return len(self.vocabulary)

    @property
    def mean_word_count(self) -> float:
        return self.word_count / self.tweet_count if self.tweet_count else 0.0


@dataclass
class CorpusStats:
    channels: "OrderedDict[str, ChannelStats]"

    @property
    def total_tweets(self) -> int:
        return sum(c.tweet_count for c in self.channels.values())

    def __getitem__(self, channel: str) -> ChannelStats:
        return self.channels[channel]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["channel", "tweets", "words", "unique_words", "mean_words"])
        for name, c in self.channels.items():
            writer.writerow(
                [name, c.tweet_count, c.word_count, c.unique_word_count,
                 f"{c.mean_word_count:.4f}"]
            )
        return buf.getvalue()


def _clean_once(text: str) -> str:
    text = _URL_SCHEME.sub(" ", text)
    text = _URL_BARE.sub(" ", text)
    text = _LEADING_RT.sub(" ", text)
    text = _MENTION.sub(" ", text)
    text = text.replace("#", "")
    return _WS.sub(" ", text).strip()


def clean(raw: str) -> str:
    """Strip URLs, a leading ``RT`` marker, ``@mentions`` and ``#`` signs.

    The rules are re-applied until the text stops changing so that removals
    which expose a new match (``"RT RT x"``, ``"@a RT x"``) are handled and
    ``clean`` is idempotent.
    """
    previous = None
    text = raw
    while text != previous:
        previous, text = text, _clean_once(text)
    return text


def tokenize(clean_text: str) -> list[str]:
    tokens = []
    for piece in clean_text.lower().split():
        piece = piece.strip(EDGE_PUNCTUATION)
        if piece:
            tokens.append(piece)
    return tokens


def channel_name(path: Path) -> str:
    return CHANNEL_NAMES.get(path.stem.lower(), path.stem)


def parse_line(line: str, channel: str, delimiter: str = "|") -> Tweet:
    """Parse one ``id|timestamp|text`` record.

    Raises
    ------
    ValueError
        If the line has fewer than three fields or the timestamp is invalid.
    """
    parts = line.rstrip("\r\n").split(delimiter)
    if len(parts) < 3:
        raise ValueError(f"expected id{delimiter}timestamp{delimiter}text")
    tweet_id, stamp = parts[0].strip(), parts[1].strip()
    raw = delimiter.join(parts[2:])
    ts = datetime.strptime(stamp, TIMESTAMP_FORMAT).astimezone(timezone.utc)
    text = clean(raw)
    return Tweet(tweet_id, channel, ts, raw, text, tuple(tokenize(text)))


def read_channel(path: str | Path, delimiter: str = "|") -> tuple[list[Tweet], int]:
    """Read one channel file, returning the tweets and the number of skipped lines."""
    path = Path(path)
    name = channel_name(path)
    tweets: list[Tweet] = []
    skipped = 0
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                tweets.append(parse_line(line, name, delimiter))
            except ValueError as exc:
                skipped += 1
                logger.debug("%s:%d skipped (%s)", path, lineno, exc)
    return tweets, skipped


def ingest(path: str | Path, delimiter: str = "|") -> list[Tweet]:
    """Load a channel file, or every ``*.txt`` file of a directory.

    Unparseable records are skipped and counted in a warning; tweets that are
    empty after cleaning are kept (see :attr:`Tweet.is_empty`).
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix == ".txt" and p.is_file())
    elif path.exists():
        files = [path]
    else:
        raise FileNotFoundError(f"no such file or directory: {path}")

    tweets: list[Tweet] = []
    skipped = 0
    for f in files:
        got, bad = read_channel(f, delimiter)
        tweets.extend(got)
        skipped += bad
    if skipped:
        logger.warning("skipped %d unparseable record(s) under %s", skipped, path)
    empty = sum(t.is_empty for t in tweets)
    if empty:
        logger.info("%d tweet(s) have no tokens after cleaning", empty)
    return tweets


def stats(tweets: Sequence[Tweet]) -> CorpusStats:
    if not tweets:
        raise CorpusError("cannot compute statistics of an empty corpus")
    channels: OrderedDict[str, ChannelStats] = OrderedDict()
    for t in tweets:
        c = channels.setdefault(t.channel, ChannelStats())
        c.tweet_count += 1
        c.word_count += len(t.tokens)
        c.vocabulary.update(t.tokens)
    return CorpusStats(channels)


def write_jsonl(tweets: Iterable[Tweet], path: str | Path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, "".join(t.to_json() + "\n" for t in tweets))


def read_jsonl(path: str | Path) -> list[Tweet]:
    with open(path, encoding="utf-8") as fh:
        return [Tweet.from_json(line) for line in fh if line.strip()]
