"""Exception hierarchy mapped to CLI exit codes."""


class MoistFemError(Exception):
    exit_code = 1


class ConfigError(MoistFemError):
    exit_code = 2


class SolverFailure(MoistFemError):
    exit_code = 3


class BalanceFailure(SolverFailure):
    pass


class StateInvalid(SolverFailure):
    pass


class SaturationUndefined(StateInvalid):
    pass


class BlowUp(MoistFemError):
    exit_code = 4
