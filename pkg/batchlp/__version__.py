__title__ = "batchlp"
__description__ = "A batched first-order LP solver for many LPs sharing one constraint matrix."
__version__ = "0.1.0"
