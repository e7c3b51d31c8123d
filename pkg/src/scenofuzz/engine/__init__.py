"""Search-based testing engine: feedback extraction, variation operators,
scenario templates, campaign orchestration, and the search algorithms."""

from .campaign import (BudgetExhausted, CampaignContext, ExecutionSettings,
                       CampaignBudget, run_campaign)
from .feedback import Feedback, compute_feedback

__all__ = [
    "BudgetExhausted",
    "CampaignContext",
    "ExecutionSettings",
    "Feedback",
    "CampaignBudget",
    "compute_feedback",
    "run_campaign",
]
