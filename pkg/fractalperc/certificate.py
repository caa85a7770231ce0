"""
Certificate and refusal records, their JSON files, and independent re-checking.

Every rational is written as "num/den" and every letter as its
restricted-growth string, so a certificate can be re-checked with exact
arithmetic and the order relation alone, without rebuilding any tables.
"""
from __future__ import annotations

import hashlib
import json
import logging
from fractions import Fraction
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ValidationError

from app.config import SITE_CONSTANT_DEFAULT
from fractalperc import __version__
from fractalperc.alphabet import decode, leq
from fractalperc.errors import MalformedCertificateError
from fractalperc.rounding import parse_ratio

logger = logging.getLogger(__name__)

CERTIFICATE_FORMAT = "fractalperc-certificate/1"


class CouplingEntry(BaseModel):
    upper: str  # letter carrying image mass
    lower: str  # letter of x it is coupled to
    weight: str


class Certificate(BaseModel):
    format: str = CERTIFICATE_FORMAT
    kind: Literal["lower", "upper"]
    M: int
    profile: list[int]
    code: str
    p: str
    p_float: str
    iterations: int
    stop_reason: str
    rounding: str
    # lower bounds
    pi_upper: str | None = None
    site_constant: str | None = None
    # upper bounds
    letters: list[str] | None = None
    x: list[str] | None = None
    image: list[str] | None = None
    witness: list[CouplingEntry] | None = None
    x_max: str | None = None
    # provenance
    software_version: str = __version__
    alphabet_sha256: str
    table_sha256: str
    config: dict = {}
    payload_sha256: str = ""

    def payload_digest(self) -> str:
        body = self.model_dump(exclude={"payload_sha256"})
        return hashlib.sha256(json.dumps(body, separators=(",", ":")).encode("utf-8")).hexdigest()

    def sealed(self) -> "Certificate":
        return self.model_copy(update={"payload_sha256": self.payload_digest()})


class Refusal(BaseModel):
    """A failed certification attempt. Never evidence that the bound is false."""

    kind: Literal["lower", "upper"]
    M: int
    profile: list[int]
    code: str
    p: float
    reason: str
    iterations: int = 0
    stop_reason: str | None = None
    last_estimate: float | None = None
    config: dict = {}


def write_certificate(cert: Certificate | Refusal, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(cert.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("wrote %s %s to %s", cert.kind, type(cert).__name__.lower(), path)


def load_certificate(path: str | Path) -> Certificate:
    try:
        return Certificate.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValidationError, ValueError) as e:
        raise MalformedCertificateError(f"cannot read certificate {path}: {e}") from e


def verify_certificate(cert: Certificate, site_constant_cap: float = SITE_CONSTANT_DEFAULT) -> bool:
    """Re-check every arithmetic claim of a certificate. Malformed fields raise."""
    if cert.payload_sha256 != cert.payload_digest():
        logger.warning("payload checksum mismatch")
        return False
    if len(cert.table_sha256) != 64 or len(cert.alphabet_sha256) != 64:
        logger.warning("missing table checksums")
        return False
    try:
        p = parse_ratio(cert.p)
        if not 0 <= p <= 1:
            return False
        if cert.kind == "lower":
            return _verify_lower(cert, site_constant_cap)
        return _verify_upper(cert)
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as e:
        raise MalformedCertificateError(f"malformed {cert.kind} certificate: {e}") from e


def _verify_lower(cert: Certificate, cap: float) -> bool:
    if cert.pi_upper is None or cert.site_constant is None:
        raise MalformedCertificateError("lower certificate without pi estimate or site constant")
    estimate = parse_ratio(cert.pi_upper)
    constant = parse_ratio(cert.site_constant)
    if constant > Fraction(cap) or constant <= 0:
        logger.warning("site constant %s is not a rigorous lower bound", cert.site_constant)
        return False
    if not estimate < constant:
        logger.warning("pi over-estimate %s is not below %s", cert.pi_upper, cert.site_constant)
        return False
    return True


def _verify_upper(cert: Certificate) -> bool:
    if cert.letters is None or cert.x is None or cert.image is None or cert.witness is None or cert.x_max is None:
        raise MalformedCertificateError("upper certificate without vectors or witness")
    letters = [decode(s) for s in cert.letters]
    index = {s: i for i, s in enumerate(cert.letters)}
    x = [parse_ratio(v) for v in cert.x]
    image = [parse_ratio(v) for v in cert.image]
    if len(x) != len(letters) or len(image) != len(letters):
        raise MalformedCertificateError("vector lengths differ from the letter list")
    if sum(x) != 1 or sum(image) != 1 or min(x) < 0 or min(image) < 0:
        logger.warning("vectors are not probability vectors")
        return False
    top = letters.index((0,) * len(letters[0]))
    if x[top] != parse_ratio(cert.x_max) or x[top] <= 0:
        logger.warning("x_max does not match a positive mass on max")
        return False
    rows = [Fraction(0)] * len(letters)
    cols = [Fraction(0)] * len(letters)
    for entry in cert.witness:
        a, b = index[entry.upper], index[entry.lower]
        w = parse_ratio(entry.weight)
        if w < 0 or not leq(letters[b], letters[a]):
            logger.warning("coupling entry %s -> %s is not on a comparable pair", entry.upper, entry.lower)
            return False
        rows[a] += w
        cols[b] += w
    if rows != image or cols != x:
        logger.warning("coupling marginals do not match image and x")
        return False
    return True
