"""The simulation engine: behaviors, flows, the step loop, logs, and metrics"""
from embedsim.engine.behavior import (
    BehaviorSpec,
    GapLaneChange,
    IdmFollow,
    KraussFollow,
    LearnedFollow,
    LearnedLaneChange,
    ModelTable,
    NoLaneChange,
)
from embedsim.engine.flow import (
    FlowConfig,
    FlowGroup,
    SpawnRecord,
    generate_flow,
    load_flow,
    save_flow,
    validate_flow,
)
from embedsim.engine.metrics import (
    RecoveryMetrics,
    final_displacement_error,
    recovery_metrics,
    trace_agreement,
    travel_time_error,
    write_report,
)
from embedsim.engine.simulation import Engine, log_bc_dataset
from embedsim.engine.trajectory import (
    Event,
    TrajectoryLog,
    TrajectoryRecord,
    TrajectoryWriter,
)

__all__ = (
    "BehaviorSpec",
    "Engine",
    "Event",
    "FlowConfig",
    "FlowGroup",
    "GapLaneChange",
    "IdmFollow",
    "KraussFollow",
    "LearnedFollow",
    "LearnedLaneChange",
    "ModelTable",
    "NoLaneChange",
    "RecoveryMetrics",
    "SpawnRecord",
    "TrajectoryLog",
    "TrajectoryRecord",
    "TrajectoryWriter",
    "final_displacement_error",
    "generate_flow",
    "load_flow",
    "log_bc_dataset",
    "recovery_metrics",
    "save_flow",
    "trace_agreement",
    "travel_time_error",
    "validate_flow",
    "write_report",
)
