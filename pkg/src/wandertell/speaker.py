"""Speaking decisions, template captions, and the external captioner bridge."""

from __future__ import annotations

import json
import queue
import re
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass

from .errors import ConfigError
from .world import Observation, Pose

MIN_OBJECT_AREA = 0.01
PROTOCOL_VERSION = 1

POLICY_VARIANTS = ("always", "depth", "object", "activation")

# default sweep grid; the alternates (1.0, 2.0, 3.0) for depth and (1, 3, 5)
# for object counts are equally valid choices for --threshold
THRESHOLD_SETS = {
    "always": (0.0,),
    "depth": (1.0, 1.5, 2.0),
    "object": (1.0, 2.0, 3.0),
    "activation": (4.5, 5.0, 5.5),
}

DEFAULT_SYNONYMS = {
    "sofa": "couch",
    "settee": "couch",
    "armchair": "chair",
    "television": "tv",
    "bookshelf": "shelf",
    "bookcase": "shelf",
    "carpet": "rug",
    "houseplant": "plant",
    "pot plant": "plant",
    "cupboard": "cabinet",
    "nightstand": "cabinet",
    "basin": "sink",
}


@dataclass(frozen=True)
class SpeakerPolicy:
    variant: str
    threshold: float = 0.0

    def __post_init__(self):
        if self.variant not in POLICY_VARIANTS:
            raise ConfigError(f"unknown speaker variant {self.variant!r}")


@dataclass(frozen=True)
class Caption:
    t: int
    text: str
    nouns: tuple
    policy: str = ""
    trigger_value: float = 0.0
    pose: Pose | None = None


def decide(policy: SpeakerPolicy, depth_mean: float, visible_areas,
           activation: float) -> tuple:
    """Threshold test on summary values; shared by live and replayed runs."""
    if policy.variant == "always":
        return True, 1.0
    if policy.variant == "depth":
        value = depth_mean
    elif policy.variant == "object":
        value = float(sum(1 for a in visible_areas if a >= MIN_OBJECT_AREA))
    else:
        value = activation
    return value >= policy.threshold, value


def should_speak(policy: SpeakerPolicy, obs: Observation) -> tuple:
    """Return (speak, measured value). Thresholds compare inclusively."""
    return decide(policy, obs.depth_mean(),
                  [v.apparent_area for v in obs.visible], obs.activation)


def caption_from_summaries(entries, t: int) -> Caption:
    """Template caption from (object_id, category, area) triples."""
    ranked = sorted(entries, key=lambda e: (-e[2], e[1], e[0]))[:3]
    if not ranked:
        return Caption(t=t, text="an empty room", nouns=("room",))
    cats = [e[1] for e in ranked]
    if len(cats) == 1:
        text = f"a room with a {cats[0]}"
    elif len(cats) == 2:
        text = f"a room with a {cats[0]} and a {cats[1]}"
    else:
        text = f"a room with a {cats[0]}, a {cats[1]} and a {cats[2]}"
    return Caption(t=t, text=text, nouns=tuple(cats))


def template_caption(obs: Observation, t: int) -> Caption:
    """Deterministic caption naming the three largest visible objects."""
    return caption_from_summaries(
        [(v.object_id, v.category, v.apparent_area) for v in obs.visible], t)


def extract_nouns(text: str, vocabulary, synonyms=None) -> list:
    """Match caption tokens against the vocabulary, bigrams before unigrams.

    Tokens are lowercase alphabetic runs. Matches map through the synonym
    table to canonical categories; duplicates are kept in first-occurrence
    order so repeated mentions stay visible to downstream metrics.
    """
    synonyms = DEFAULT_SYNONYMS if synonyms is None else synonyms
    canon = {w: w for w in vocabulary}
    for alias, target in synonyms.items():
        canon.setdefault(alias, target)
    tokens = re.findall(r"[a-z]+", text.lower())
    out = []
    i = 0
    while i < len(tokens):
        if i + 1 < len(tokens) and f"{tokens[i]} {tokens[i + 1]}" in canon:
            out.append(canon[f"{tokens[i]} {tokens[i + 1]}"])
            i += 2
            continue
        if tokens[i] in canon:
            out.append(canon[tokens[i]])
        i += 1
    return out


def _encode_request(t: int, obs: Observation) -> bytes:
    payload = {
        "v": PROTOCOL_VERSION,
        "t": t,
        "visible": [{"category": v.category, "area": v.apparent_area}
                    for v in obs.visible],
        "depth_mean": obs.depth_mean(),
        "activation": obs.activation,
    }
    return (json.dumps(payload, sort_keys=True) + "\n").encode()


class ExternalCaptioner:
    """Line-oriented JSON bridge to a captioner child process or TCP server.

    Endpoints look like "cmd:python my_captioner.py" or "tcp:host:port".
    Every failure mode (timeout, malformed reply, version mismatch, broken
    stream) falls back to the template caption and bumps warning_count; an
    episode never aborts because its captioner died.
    """

    def __init__(self, endpoint: str, vocabulary, synonyms=None,
                 timeout_s: float = 2.0):
        self.vocabulary = tuple(vocabulary)
        self.synonyms = DEFAULT_SYNONYMS if synonyms is None else synonyms
        self.timeout_s = timeout_s
        self.warning_count = 0
        self._proc = None
        self._sock = None
        if endpoint.startswith("cmd:"):
            self._proc = subprocess.Popen(
                shlex.split(endpoint[4:]), stdin=subprocess.PIPE,
                stdout=subprocess.PIPE, bufsize=0)
            self._writer = self._proc.stdin
            reader = self._proc.stdout
        elif endpoint.startswith("tcp:"):
            host, _, port = endpoint[4:].rpartition(":")
            if not host or not port.isdigit():
                raise ConfigError(f"bad tcp endpoint {endpoint!r}")
            self._sock = socket.create_connection((host, int(port)), timeout=10.0)
            self._writer = self._sock.makefile("wb", buffering=0)
            reader = self._sock.makefile("rb")
        else:
            raise ConfigError(f"captioner endpoint must start with cmd: or tcp:, got {endpoint!r}")
        self._lines: queue.Queue = queue.Queue()
        self._reader_thread = threading.Thread(
            target=self._pump, args=(reader,), daemon=True)
        self._reader_thread.start()

    def _pump(self, reader):
        try:
            for line in reader:
                self._lines.put(line)
        except Exception:
            pass
        self._lines.put(None)

    def caption(self, t: int, obs: Observation) -> Caption:
        # drop any stale replies left over from an earlier timeout
        try:
            while True:
                self._lines.get_nowait()
        except queue.Empty:
            pass
        try:
            self._writer.write(_encode_request(t, obs))
            line = self._lines.get(timeout=self.timeout_s)
            if line is None:
                raise OSError("captioner stream closed")
            reply = json.loads(line)
            if reply.get("v") != PROTOCOL_VERSION:
                raise ValueError(f"protocol version {reply.get('v')!r}")
            text = reply["text"]
            if not isinstance(text, str) or not text:
                raise ValueError("empty caption text")
            if "nouns" in reply:
                nouns = tuple(str(n) for n in reply["nouns"])
            else:
                nouns = tuple(extract_nouns(text, self.vocabulary, self.synonyms))
            return Caption(t=t, text=text, nouns=nouns)
        except (OSError, ValueError, KeyError, TypeError, queue.Empty):
            self.warning_count += 1
            return template_caption(obs, t)

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.terminate()
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        if self._sock is not None:
            # shutdown (not just close) so the peer and our reader thread,
            # which holds a makefile reference to the fd, both see EOF
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self._sock.close()
            except OSError:
                pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
