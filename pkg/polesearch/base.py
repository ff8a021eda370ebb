from enum import Enum


class AgentStatus(str, Enum):
    """Search status of a single agent"""

    DECIDING = "d"
    FOUND = "f"
    FAILED = "t"
    EN_ROUTE = "r"

    @property
    def is_absorbing(self) -> bool:
        return self in (AgentStatus.FOUND, AgentStatus.FAILED)


class AvailabilityMode(str, Enum):
    """How station availability is evaluated for a planning agent"""

    INDEPENDENT = "independent"
    DEPENDENT = "dependent"


class TerminalMode(str, Enum):
    """Which labels count as complete candidate policies"""

    ANY_PREFIX = "any_prefix"
    DEAD_END = "dead_end"


class PenaltyConvention(str, Enum):
    """Whether simulated individual cost adds the penalty on failed or successful runs"""

    FAILURE = "failure"
    SUCCESS = "success"


class Setting(str, Enum):
    """Information-sharing / decision-making settings"""

    DEC_N = "DEC-N"
    DEC = "DEC"
    DEC_I = "DEC-I"
    DEC_I_C = "DEC-I-c"
    DEC_O = "DEC-O"
    DEC_IO = "DEC-IO"
    DEC_IO_C = "DEC-IO-c"
    DEC_O_D = "DEC-O-d"
    CEN_G = "CEN-G"
    CEN_RO = "CEN-RO"
    CEN_LHRO = "CEN-LHRO"
    OFF = "OFF"

    @property
    def is_static(self) -> bool:
        return self in STATIC_SETTINGS

    @property
    def shares_intentions(self) -> bool:
        return self in (
            Setting.DEC_I,
            Setting.DEC_I_C,
            Setting.DEC_IO,
            Setting.DEC_IO_C,
        )

    @property
    def shares_observations(self) -> bool:
        return self in (
            Setting.DEC_O,
            Setting.DEC_IO,
            Setting.DEC_IO_C,
            Setting.DEC_O_D,
            Setting.CEN_G,
            Setting.CEN_RO,
            Setting.CEN_LHRO,
        )

    @property
    def is_collaborative(self) -> bool:
        return self in (Setting.DEC_I_C, Setting.DEC_IO_C)

    @classmethod
    def parse(cls, name: str) -> "Setting":
        for setting in cls:
            if setting.value.lower() == name.strip().lower():
                return setting
        raise ValueError(f"Unknown setting: {name}")


STATIC_SETTINGS = frozenset(
    {
        Setting.DEC,
        Setting.DEC_I,
        Setting.DEC_I_C,
        Setting.DEC_O,
        Setting.DEC_IO,
        Setting.DEC_IO_C,
    }
)

# Settings whose planners read the global penalty
BETA_SENSITIVE_SETTINGS = frozenset(
    {
        Setting.DEC_I,
        Setting.DEC_I_C,
        Setting.DEC_IO,
        Setting.DEC_IO_C,
        Setting.CEN_RO,
        Setting.CEN_LHRO,
    }
)
