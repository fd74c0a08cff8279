from __future__ import annotations

from rich.panel import Panel


class HydroSampleError(Exception):
    exit_code = 2

    def __init__(self, msg: str, title: str = "") -> None:
        super().__init__(msg)
        self.msg = msg
        self.title = title


class HydroSampleValidationError(HydroSampleError):
    """
    Raised when user-supplied input (a file, a config value, a plan) is invalid.
    The CLI exits with code 1 for these.
    """

    exit_code = 1


class NetworkParseError(HydroSampleValidationError):
    def __init__(self, msg: str, line: int | None = None, title: str = "") -> None:
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(
            msg, title=title or "Hydrosample couldn't parse your network file."
        )
        self.line = line


class NetworkValidationError(HydroSampleValidationError):
    pass


class ScenarioError(HydroSampleValidationError):
    pass


class ConfigError(HydroSampleValidationError):
    pass


class PlanError(HydroSampleValidationError):
    pass


class ModelFormatError(HydroSampleValidationError):
    pass


class HydraulicsError(HydroSampleError):
    pass


class CflError(HydroSampleError):
    def __init__(self, msg: str, pipe_id: str, title: str = "") -> None:
        super().__init__(msg, title=title or "Transport time step is too large.")
        self.pipe_id = pipe_id


class GftError(HydroSampleError):
    pass


class SamplingError(HydroSampleError):
    pass


class TrainingError(HydroSampleError):
    def __init__(self, msg: str, epoch: int | None = None, title: str = "") -> None:
        super().__init__(msg, title=title or "Training diverged.")
        self.epoch = epoch


class EvaluationError(HydroSampleError):
    pass


class PipelineError(HydroSampleError):
    def __init__(
        self, msg: str, stage: str, partial_manifest: bool = False, title: str = ""
    ) -> None:
        super().__init__(
            f"[{stage}] {msg}", title=title or f"Pipeline failed at stage {stage}."
        )
        self.stage = stage
        self.partial_manifest = partial_manifest


def pretty_print_error(error: HydroSampleError) -> None:
    from rich import print

    print(pretty_error_message(error))


def pretty_error_message(error: HydroSampleError) -> Panel:
    return Panel.fit(
        str(error),
        title=error.title if error.title else ("Hydrosample encountered an error."),
        title_align="left",
        border_style="red",
    )
