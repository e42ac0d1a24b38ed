"""Exception hierarchy shared by all subsystems."""


class RelayFLError(Exception):
    """Base class for all errors raised by relayfl."""


class ConfigError(RelayFLError, ValueError):
    """Invalid or inconsistent configuration."""


class InfeasibleError(RelayFLError):
    """A latency or power budget cannot be met."""


class DeadlineInfeasibleError(InfeasibleError):
    pass


class PilotInfeasibleError(InfeasibleError):
    """Pilot overhead consumes the whole uplink slot."""


class ZeroRateError(InfeasibleError):
    """A scheduled link has (numerically) zero rate, so its airtime is unbounded."""

    def __init__(self, sn: int, link: str):
        self.sn = sn
        self.link = link
        super().__init__(f"SN {sn} has zero rate on its {link} link")


class EmptyRelaySetError(RelayFLError, ValueError):
    """No relay is available; callers fall back to single-hop."""


class SolverError(RelayFLError):
    """The convex subproblem solver failed; carries the last residuals."""

    def __init__(self, status: str, message: str = "", residuals: dict | None = None):
        self.status = status
        self.residuals = residuals or {}
        super().__init__(f"{status}: {message}" if message else status)


class NoFeasiblePointError(InfeasibleError):
    pass


class OracleDimensionError(RelayFLError, ValueError):
    pass
