"""Exception types shared across the package.

Config validation failures carry a stable ``category`` string so callers
(and tests) can distinguish error classes without parsing messages.
"""

from __future__ import annotations


class HyperSweepError(Exception):
    """Base class for all package errors."""


class ConfigError(HyperSweepError):
    """Invalid experiment/job configuration.

    Categories: malformed-json, missing-field, bad-type, bad-range,
    unknown-proposer, unknown-option, bad-value, missing-param,
    out-of-range, grid-too-large, duplicate-name.
    """

    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


class EnvFileError(HyperSweepError):
    """Invalid or unusable environment file."""


class ResourceError(HyperSweepError):
    """Resource pool misuse or exhaustion treated as fatal (e.g. no slot of
    the requested type exists at all)."""


class ProposerError(HyperSweepError):
    """Proposer contract violation: unknown or duplicated job_id, bad state."""


class StoreError(HyperSweepError):
    """Tracking-store failure: schema mismatch, constraint violation,
    duplicate terminal transition."""


class ProtocolError(HyperSweepError):
    """Job stdout did not contain a parseable result line."""


class GpFitError(HyperSweepError):
    """Kernel matrix stayed indefinite after maximum jitter escalation."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
