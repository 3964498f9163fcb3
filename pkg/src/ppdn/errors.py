"""Exception hierarchy shared by every ppdn module."""


class PPDNError(Exception):
    """Base class for all domain errors raised by ppdn."""

    exit_code = 2


class ConfigError(PPDNError, ValueError):
    """Malformed or invalid network configuration.

    ``field`` names the offending entry, e.g. ``routers[1].capacitance``.
    """

    exit_code = 1

    def __init__(self, field, message):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class NotUnderdamped(PPDNError):
    """One or more connections have damping ratio >= 1."""

    def __init__(self, offending):
        # offending: list of (connection index, zeta)
        self.offending = list(offending)
        desc = ", ".join(
            f"connection {j} (zeta={z:.4g})" if j is not None else f"zeta={z:.4g}"
            for j, z in self.offending
        )
        super().__init__(f"not underdamped: {desc}")


class BackflowGap(PPDNError):
    """Payload requested with the receiver above the sender."""


class SingularSystem(PPDNError):
    """Steady-state matrix is numerically singular."""


class ScheduleOverlap(PPDNError):
    """Two payload windows overlap within a cycle."""


class PayloadTooShort(PPDNError):
    """Payload duration shorter than one bit time."""


class CycleTooShort(PPDNError):
    """Payload windows do not fit in the switching cycle."""

    def __init__(self, required_bits, cycle_bits):
        self.required_bits = required_bits
        self.cycle_bits = cycle_bits
        super().__init__(
            f"cycle of {cycle_bits} bits too short: payload windows need at least {required_bits}"
        )


class Diverged(PPDNError):
    """Non-finite state encountered during integration."""

    def __init__(self, time):
        self.time = time
        super().__init__(f"simulation diverged at t={time:.9g} s")


class InsufficientCycles(PPDNError):
    """Trace too short for a steady-state summary."""
