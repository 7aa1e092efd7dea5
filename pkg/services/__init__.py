from services.preset_service import PresetService
from services.trainer_oc import OCTrainer
from services.trainer_dyn import DynTrainer
from services.evaluator import Evaluator

__all__ = ["PresetService", "OCTrainer", "DynTrainer", "Evaluator"]
