from .params import ModelParams

__all__ = ["ModelParams"]
