"""recontext: few-shot product image augmentation, filtering, and evaluation."""

__version__ = "0.1.0"
