"""Byte-signature rules and the page scanner.

Rule files are line oriented, one rule per line, ``#`` starts a comment:

    rule <name> family=<label> severity=<kill|alert> [sync] { <hex-pair | ??>+ }

Hex pairs are case-insensitive; ``??`` matches any byte.  ``sync`` marks
a rule for the small in-fault-path check and requires severity=kill.

Matching is exact-byte with wildcards, per page, overlapping matches
included.  The compiled form is an Aho-Corasick automaton over each
pattern's longest run of consecutive literal bytes; an anchor hit
yields one candidate start offset, which is then verified against the
remaining literal positions.  Result order is (offset, rule name), so a
scan is a pure function of (content, ruleset).
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field

Atom = int | None  # one pattern position: literal byte or wildcard

_HEX_PAIR = re.compile(r"[0-9a-fA-F]{2}$")
_NAME = re.compile(r"\w+$")


class RuleSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class SignatureRule:
    name: str
    family: str
    severity: str  # "kill" | "alert"
    sync: bool
    atoms: tuple[int | None, ...]

    def __post_init__(self) -> None:
        if self.severity not in ("kill", "alert"):
            raise ValueError(f"rule {self.name}: bad severity {self.severity!r}")
        if not self.atoms:
            raise ValueError(f"rule {self.name}: empty pattern")
        if all(a is None for a in self.atoms):
            raise ValueError(f"rule {self.name}: pattern needs at least one literal byte")
        if self.sync and self.severity != "kill":
            raise ValueError(f"rule {self.name}: sync rules must have severity=kill")

    def anchor(self) -> tuple[int, bytes]:
        """(offset, bytes) of the longest run of consecutive literals."""
        best_off, best = 0, b""
        run_off, run = 0, []
        for i, atom in enumerate(list(self.atoms) + [None]):
            if atom is None:
                if len(run) > len(best):
                    best_off, best = run_off, bytes(run)
                run = []
                run_off = i + 1
            else:
                run.append(atom)
        return best_off, best


@dataclass(frozen=True)
class Match:
    rule: str
    offset: int


@dataclass
class ScanResult:
    matches: list[Match] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.matches)


class _MultiPattern:
    """Aho-Corasick over anchor strings with post-hit verification."""

    def __init__(self, rules: list[SignatureRule]):
        self.rules = rules
        # trie as parallel arrays: goto maps, fail links, merged outputs
        self._goto: list[dict[int, int]] = [{}]
        self._fail: list[int] = [0]
        self._out: list[list[tuple[int, int, int]]] = [[]]  # (rule_idx, anchor_off, anchor_len)
        # literal (position, byte) checks per rule for verification
        self._literals: list[list[tuple[int, int]]] = []
        for idx, rule in enumerate(rules):
            self._literals.append([(i, a) for i, a in enumerate(rule.atoms) if a is not None])
            anchor_off, anchor = rule.anchor()
            node = 0
            for byte in anchor:
                nxt = self._goto[node].get(byte)
                if nxt is None:
                    self._goto.append({})
                    self._fail.append(0)
                    self._out.append([])
                    nxt = len(self._goto) - 1
                    self._goto[node][byte] = nxt
                node = nxt
            self._out[node].append((idx, anchor_off, len(anchor)))
        # breadth-first fail links, outputs merged along them
        queue = deque()
        for node in self._goto[0].values():
            queue.append(node)
        while queue:
            node = queue.popleft()
            for byte, child in self._goto[node].items():
                queue.append(child)
                fall = self._fail[node]
                while fall and byte not in self._goto[fall]:
                    fall = self._fail[fall]
                self._fail[child] = self._goto[fall].get(byte, 0)
                self._out[child] = self._out[child] + self._out[self._fail[child]]

    def scan(self, data: bytes) -> list[Match]:
        hits: list[Match] = []
        goto, fail, out = self._goto, self._fail, self._out
        node = 0
        for pos, byte in enumerate(data):
            while node and byte not in goto[node]:
                node = fail[node]
            node = goto[node].get(byte, 0)
            if not out[node]:
                continue
            for rule_idx, anchor_off, anchor_len in out[node]:
                start = pos - anchor_len + 1 - anchor_off
                rule = self.rules[rule_idx]
                if start < 0 or start + len(rule.atoms) > len(data):
                    continue
                if all(data[start + i] == b for i, b in self._literals[rule_idx]):
                    hits.append(Match(rule.name, start))
        hits.sort(key=lambda m: (m.offset, m.rule))
        return hits


class RuleSet:
    """Parsed rules plus compiled indexes for full and sync-only scans."""

    def __init__(self, rules: list[SignatureRule], page_size: int = 4096):
        names = set()
        for rule in rules:
            if rule.name in names:
                raise ValueError(f"duplicate rule name {rule.name!r}")
            names.add(rule.name)
            if len(rule.atoms) > page_size:
                raise ValueError(
                    f"rule {rule.name}: pattern longer than page size {page_size}"
                )
        self.rules = list(rules)
        self.page_size = page_size
        self.by_name = {r.name: r for r in self.rules}
        self.sync_rules = [r for r in self.rules if r.sync]
        self._full = _MultiPattern(self.rules)
        self._sync = _MultiPattern(self.sync_rules)

    def __len__(self) -> int:
        return len(self.rules)


EMPTY_RULESET = RuleSet([], page_size=4096)


def parse_rules(text: str, page_size: int = 4096) -> RuleSet:
    """Parse a rule file; raises RuleSyntaxError with line and column."""
    rules: list[SignatureRule] = []
    names: set[str] = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        tokens = [(m.start() + 1, m.group()) for m in re.finditer(r"\S+", line)]

        def fail(msg: str, at: int = 0) -> RuleSyntaxError:
            col = tokens[at][0] if at < len(tokens) else len(line) + 1
            return RuleSyntaxError(msg, line_no, col)

        pos = 0

        def take(expect: str | None = None) -> tuple[int, str]:
            nonlocal pos
            if pos >= len(tokens):
                raise fail(f"expected {expect or 'more input'}, got end of line", pos)
            tok = tokens[pos]
            pos += 1
            return tok

        col, word = take("'rule'")
        if word != "rule":
            raise RuleSyntaxError(f"expected 'rule', got {word!r}", line_no, col)
        col, name = take("rule name")
        if not _NAME.match(name):
            raise RuleSyntaxError(f"bad rule name {name!r}", line_no, col)
        if name in names:
            raise RuleSyntaxError(f"duplicate rule name {name!r}", line_no, col)
        col, fam = take("family=<label>")
        if not fam.startswith("family="):
            raise RuleSyntaxError(f"expected family=<label>, got {fam!r}", line_no, col)
        family = fam[len("family=") :]
        if not family:
            raise RuleSyntaxError("empty family label", line_no, col)
        col, sev = take("severity=<kill|alert>")
        if not sev.startswith("severity="):
            raise RuleSyntaxError(f"expected severity=..., got {sev!r}", line_no, col)
        severity = sev[len("severity=") :]
        if severity not in ("kill", "alert"):
            raise RuleSyntaxError(
                f"severity must be kill or alert, got {severity!r}", line_no, col
            )
        sync = False
        col, word = take("'sync' or '{'")
        if word == "sync":
            sync = True
            col, word = take("'{'")
        if word != "{":
            raise RuleSyntaxError(f"expected '{{', got {word!r}", line_no, col)
        atoms: list[int | None] = []
        closed = False
        while pos < len(tokens):
            col, word = take()
            if word == "}":
                closed = True
                break
            if word == "??":
                atoms.append(None)
            elif _HEX_PAIR.match(word):
                atoms.append(int(word, 16))
            else:
                raise RuleSyntaxError(
                    f"expected hex pair, ?? or '}}', got {word!r}", line_no, col
                )
        if not closed:
            raise fail("expected '}' before end of line", pos)
        if pos < len(tokens):
            raise RuleSyntaxError(
                f"trailing input after '}}': {tokens[pos][1]!r}", line_no, tokens[pos][0]
            )
        if not atoms:
            raise RuleSyntaxError("empty pattern", line_no, col)
        if all(a is None for a in atoms):
            raise RuleSyntaxError("pattern needs at least one literal byte", line_no, col)
        if len(atoms) > page_size:
            raise RuleSyntaxError(
                f"pattern longer than page size {page_size}", line_no, col
            )
        if sync and severity != "kill":
            raise RuleSyntaxError("sync rules must have severity=kill", line_no, col)
        names.add(name)
        rules.append(SignatureRule(name, family, severity, sync, tuple(atoms)))
    return RuleSet(rules, page_size=page_size)


def scan_page(content: bytes, rules: RuleSet) -> ScanResult:
    """All rule matches in one page, ordered by (offset, rule name)."""
    if len(content) != rules.page_size:
        raise ValueError(
            f"content is {len(content)} bytes, page size is {rules.page_size}"
        )
    return ScanResult(rules._full.scan(content))


def sync_check(content: bytes, rules: RuleSet) -> Match | None:
    """First sync-rule threat in the buffer, or None when clean."""
    hits = rules._sync.scan(content)
    return hits[0] if hits else None
