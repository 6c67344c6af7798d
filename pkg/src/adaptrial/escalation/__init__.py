"""Phase-I dose-finding engines: rule-based 3+3, model-based CRM and EWOC."""

from .three_plus_three import ThreePlusThreeRules, three_plus_three_next
from .crm import CrmConfig, DosePosterior, crm_posterior, crm_next_dose, crm_stop_check
from .ewoc import EwocConfig, EwocPosterior, ewoc_posterior, ewoc_next_dose

__all__ = [
    "ThreePlusThreeRules",
    "three_plus_three_next",
    "CrmConfig",
    "DosePosterior",
    "crm_posterior",
    "crm_next_dose",
    "crm_stop_check",
    "EwocConfig",
    "EwocPosterior",
    "ewoc_posterior",
    "ewoc_next_dose",
]
