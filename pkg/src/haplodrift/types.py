"""Domain model for Y-STR loci, kits, haplotypes and match patterns.

A haplotype is an ordered list of per-locus profiles, one per kit locus,
where each locus is either deleted, carries a single allele, or carries a
duplicated pair of alleles.  Alleles are stored as exact integer pairs
(whole repeats, partial-repeat digit) so that equality never depends on
floating point.  From a haplotype three aligned summaries are derived:

* identity pattern  -- the profile list itself,
* deletion/duplication pattern -- copy number 0/1/2 per locus,
* repeat pattern    -- the pair of partial-repeat digits per locus.

Match counting against a reference database works on these patterns.
"""

from __future__ import annotations

import csv
import io
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence


@dataclass(frozen=True, order=True)
class Allele:
    """An STR allele: whole-repeat count plus partial-repeat digit (17.2 -> (17, 2))."""

    repeat_integer: int
    repeat_part: int = 0

    def __post_init__(self):
        if not (0 <= self.repeat_integer <= 99):
            raise ValueError(f"repeat_integer out of range: {self.repeat_integer}")
        if not (0 <= self.repeat_part < 10):
            raise ValueError(f"repeat_part out of range: {self.repeat_part}")

    def __str__(self) -> str:
        if self.repeat_part:
            return f"{self.repeat_integer}.{self.repeat_part}"
        return str(self.repeat_integer)


# Copy numbers for the deletion/duplication pattern.
DELETED, SINGLE, DUPLICATED = 0, 1, 2


@dataclass(frozen=True)
class LocusProfile:
    """Profile of one locus: no allele (deleted), one allele, or an ordered pair."""

    alleles: tuple[Allele, ...]

    def __post_init__(self):
        if len(self.alleles) > 2:
            raise ValueError("a locus profile holds at most two alleles")
        if len(self.alleles) == 2 and self.alleles[0] > self.alleles[1]:
            object.__setattr__(self, "alleles", tuple(sorted(self.alleles)))

    @classmethod
    def deleted(cls) -> "LocusProfile":
        return cls(())

    @classmethod
    def single(cls, allele: Allele) -> "LocusProfile":
        return cls((allele,))

    @classmethod
    def duplicated(cls, low: Allele, high: Allele) -> "LocusProfile":
        return cls(tuple(sorted((low, high))))

    @property
    def copy_number(self) -> int:
        return len(self.alleles)

    @property
    def is_deleted(self) -> bool:
        return not self.alleles

    def repeat_pair(self) -> tuple[int, int]:
        """Partial-repeat pair: (0,0) deleted, (0,r) single, sorted (r1,r2) duplicated."""
        if not self.alleles:
            return (0, 0)
        if len(self.alleles) == 1:
            return (0, self.alleles[0].repeat_part)
        r1, r2 = (a.repeat_part for a in self.alleles)
        return (r1, r2) if r1 <= r2 else (r2, r1)

    def __str__(self) -> str:
        if not self.alleles:
            return "-"
        return "/".join(str(a) for a in self.alleles)


@dataclass(frozen=True)
class Locus:
    name: str
    chromosome_order: int
    mutation_rate: float
    multicopy: bool = False

    def __post_init__(self):
        if not (0.0 <= self.mutation_rate < 1.0):
            raise ValueError(f"mutation rate must be in [0,1): {self.mutation_rate}")


@dataclass(frozen=True)
class Kit:
    """An ordered panel of Y-STR loci; ordering follows chromosome position."""

    name: str
    loci: tuple[Locus, ...]

    def __post_init__(self):
        if not self.loci:
            raise ValueError("kit must contain at least one locus")
        object.__setattr__(
            self, "loci", tuple(sorted(self.loci, key=lambda l: l.chromosome_order))
        )
        orders = [l.chromosome_order for l in self.loci]
        if len(set(orders)) != len(orders):
            raise ValueError("chromosome_order values must be unique within a kit")
        names = [l.name for l in self.loci]
        if len(set(names)) != len(names):
            raise ValueError("locus names must be unique within a kit")

    def __len__(self) -> int:
        return len(self.loci)

    def locus_index(self, name: str) -> int:
        for i, locus in enumerate(self.loci):
            if locus.name == name:
                return i
        raise KeyError(f"unknown locus {name!r} for kit {self.name!r}")

    @classmethod
    def from_json(cls, text: str) -> "Kit":
        raw = json.loads(text)
        loci = tuple(
            Locus(
                name=entry["name"],
                chromosome_order=int(entry["chromosome_order"]),
                mutation_rate=float(entry["mutation_rate"]),
                multicopy=bool(entry.get("multicopy", False)),
            )
            for entry in raw["loci"]
        )
        return cls(name=raw["name"], loci=loci)

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "loci": [
                    {
                        "name": l.name,
                        "chromosome_order": l.chromosome_order,
                        "mutation_rate": l.mutation_rate,
                        "multicopy": l.multicopy,
                    }
                    for l in self.loci
                ],
            },
            indent=2,
            sort_keys=True,
        )


@dataclass(frozen=True)
class Haplotype:
    """Ordered per-locus profiles; length must equal the kit's locus count."""

    profiles: tuple[LocusProfile, ...]

    def __len__(self) -> int:
        return len(self.profiles)

    def __str__(self) -> str:
        return ",".join(str(p) for p in self.profiles)


IdentityPattern = tuple[LocusProfile, ...]
DelDupPattern = tuple[int, ...]
RepeatPattern = tuple[tuple[int, int], ...]


_ALLELE_RE = re.compile(r"^(\d{1,2})(?:\.(\d))?$")


def parse_allele(token: str) -> Allele:
    m = _ALLELE_RE.match(token.strip())
    if m is None:
        raise ValueError(f"malformed allele token: {token!r}")
    return Allele(int(m.group(1)), int(m.group(2) or 0))


def parse_haplotype(text: str, kit: Kit) -> Haplotype:
    """Parse a comma-separated haplotype in kit locus order.

    Grammar per field: "-" marks a deleted locus, "a/b" a duplicated pair,
    and "n.p" an allele of n whole repeats plus partial-repeat digit p.
    Triplicated loci (three or more alleles) are rejected.  A single allele
    on an inherently multicopy locus is read as two copies of that allele.
    """
    fields = [f.strip() for f in text.strip().split(",")]
    if len(fields) != len(kit):
        raise ValueError(
            f"expected {len(kit)} locus fields for kit {kit.name!r}, got {len(fields)}"
        )
    profiles = []
    for field_text, locus in zip(fields, kit.loci):
        if field_text == "-" or field_text == "":
            profiles.append(LocusProfile.deleted())
            continue
        parts = field_text.split("/")
        if len(parts) == 1:
            allele = parse_allele(parts[0])
            if locus.multicopy:
                profiles.append(LocusProfile.duplicated(allele, allele))
            else:
                profiles.append(LocusProfile.single(allele))
        elif len(parts) == 2:
            profiles.append(
                LocusProfile.duplicated(parse_allele(parts[0]), parse_allele(parts[1]))
            )
        else:
            raise ValueError(
                f"triplicated locus {locus.name!r} is not supported: {field_text!r}"
            )
    return Haplotype(tuple(profiles))


def extract_patterns(h: Haplotype) -> tuple[IdentityPattern, DelDupPattern, RepeatPattern]:
    """Return the aligned (identity, deletion/duplication, repeat) patterns."""
    identity = tuple(h.profiles)
    deldup = tuple(p.copy_number for p in h.profiles)
    repeat = tuple(p.repeat_pair() for p in h.profiles)
    return identity, deldup, repeat


def aggregate_nonmutation(d: DelDupPattern, kit: Kit) -> float:
    """Probability that no locus of a haplotype with copy pattern `d` mutates.

    A deleted locus cannot mutate; a duplicated locus carries two mutable
    copies, so its non-mutation probability enters squared.
    """
    if len(d) != len(kit):
        raise ValueError("pattern length does not match kit")
    out = 1.0
    for copies, locus in zip(d, kit.loci):
        if copies:
            out *= (1.0 - locus.mutation_rate) ** copies
    return out


@dataclass(frozen=True)
class HaplotypeDatabase:
    """A reference collection of complete haplotypes from one population."""

    haplotypes: tuple[Haplotype, ...]
    population_label: str = ""

    def __len__(self) -> int:
        return len(self.haplotypes)

    @classmethod
    def from_csv(cls, text: str, kit: Kit, population_label: str = "") -> "HaplotypeDatabase":
        """Read the database CSV: header of locus names in kit order, one row per haplotype."""
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty database file") from None
        expected = [l.name for l in kit.loci]
        if [h.strip() for h in header] != expected:
            raise ValueError(
                f"database header {header} does not match kit loci {expected}"
            )
        haplotypes = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            haplotypes.append(parse_haplotype(",".join(row), kit))
        return cls(tuple(haplotypes), population_label)

    def to_csv(self, kit: Kit) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([l.name for l in kit.loci])
        for h in self.haplotypes:
            writer.writerow([str(p) for p in h.profiles])
        return buf.getvalue()


@dataclass(frozen=True)
class MatchCounts:
    """Pattern match counts for one query haplotype against M observed haplotypes."""

    c_I: int
    c_D: int
    c_R: int
    r_m: tuple[int, ...]
    M: int

    def __post_init__(self):
        if not (0 <= self.c_I <= self.c_R <= self.M):
            raise ValueError("require 0 <= c_I <= c_R <= M")
        if not (0 <= self.c_D <= self.M):
            raise ValueError("require 0 <= c_D <= M")
        if any(r > self.M or r < 0 for r in self.r_m):
            raise ValueError("per-locus repeat counts must lie in [0, M]")


class MatchIndex:
    """Pattern counters over a pool of observed haplotypes (database plus typed persons).

    Built once, then queried in O(number of loci) per haplotype.
    """

    def __init__(self, haplotypes: Sequence[Haplotype]):
        lengths = {len(h) for h in haplotypes}
        if len(lengths) > 1:
            raise ValueError("observed haplotypes disagree on locus count")
        self._n_loci = lengths.pop() if lengths else None
        self.M = len(haplotypes)
        self._identity: Counter = Counter()
        self._deldup: Counter = Counter()
        self._repeat: Counter = Counter()
        self._repeat_by_locus: list[Counter] = []
        for h in haplotypes:
            identity, deldup, repeat = extract_patterns(h)
            self._identity[identity] += 1
            self._deldup[deldup] += 1
            self._repeat[repeat] += 1
            if not self._repeat_by_locus:
                self._repeat_by_locus = [Counter() for _ in repeat]
            for i, pair in enumerate(repeat):
                self._repeat_by_locus[i][pair] += 1

    def counts_for(self, h: Haplotype) -> MatchCounts:
        if self._n_loci is not None and len(h) != self._n_loci:
            raise ValueError("query haplotype locus count does not match the pool")
        identity, deldup, repeat = extract_patterns(h)
        if self._repeat_by_locus:
            r_m = tuple(self._repeat_by_locus[i][pair] for i, pair in enumerate(repeat))
        else:
            r_m = tuple(0 for _ in repeat)
        return MatchCounts(
            c_I=self._identity[identity],
            c_D=self._deldup[deldup],
            c_R=self._repeat[repeat],
            r_m=r_m,
            M=self.M,
        )


def count_matches(
    h: Haplotype,
    db: HaplotypeDatabase,
    typed: Iterable[Haplotype] = (),
) -> MatchCounts:
    """Count identity, deletion/duplication and repeat pattern matches of `h`
    over the pooled database and typed persons."""
    pool = list(db.haplotypes) + list(typed)
    if any(len(x) != len(h) for x in pool):
        raise ValueError("kit mismatch: pooled haplotypes differ in locus count")
    return MatchIndex(pool).counts_for(h)
