"""Toy shop package used as an extraction fixture."""
from .cart import Cart
from .pricing import apply_discount

__all__ = ["Cart", "apply_discount"]
