"""Fully symmetric round protocols: protocol functions, broadcast, validation and the round loop."""

from .broadcast import BrachaBroadcast, PlainBroadcast, broadcast_schedule, make_broadcast, next_delivery
from .process import Processor, RoundState, round_step
from .protocols import (
    PROTOCOLS,
    VOTE0,
    VOTE1,
    BenOrStyle,
    MessageBag,
    PointMassMajority,
    ProtocolFunction,
    SupportTooLarge,
    make_bag,
    make_protocol,
    register,
)
from .validate import Chained, PerRound, SearchBudgetExceeded, good_message_completeness_check, make_policy

__all__ = [
    "BenOrStyle", "BrachaBroadcast", "Chained", "MessageBag", "PROTOCOLS", "PerRound",
    "PlainBroadcast", "PointMassMajority", "Processor", "ProtocolFunction", "RoundState",
    "SearchBudgetExceeded", "SupportTooLarge", "VOTE0", "VOTE1", "broadcast_schedule",
    "good_message_completeness_check",    "make_bag", "make_broadcast", "make_policy", "make_protocol", "next_delivery",
    "register", "round_step",
]
