from .combat import CombatEnv, CombatState, combat_observe, combat_reset, combat_step, bot_policy
from .nav import NavEnv, NavState, nav_oracle, nav_render, nav_reset, nav_step

__all__ = [
    "CombatEnv", "CombatState", "combat_observe", "combat_reset", "combat_step", "bot_policy",
    "NavEnv", "NavState", "nav_oracle", "nav_render", "nav_reset", "nav_step",
]
