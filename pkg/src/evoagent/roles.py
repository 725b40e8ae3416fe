"""Agent role identifiers used across the engine."""
from enum import Enum


class AgentRole(str, Enum):
    MANAGER = "manager"
    DEV = "dev"
    CRITIC = "critic"
    TOOL_CREATOR = "tool_creator"
    HUMAN = "human"


#: Roles that must have a model binding in every run config.
MODEL_ROLES = (AgentRole.MANAGER, AgentRole.DEV, AgentRole.CRITIC, AgentRole.TOOL_CREATOR)
