from models.schemas import RunConfig, GenConfig, ModelConfig, EvalReport, ReadoutReport
from models.oc_model import ObjectCentricVideoModel
from models.dynamics import SlotDynamics
from models.readout import PairwiseReadout

__all__ = [
    "RunConfig", "GenConfig", "ModelConfig", "EvalReport", "ReadoutReport",
    "ObjectCentricVideoModel", "SlotDynamics", "PairwiseReadout",
]
