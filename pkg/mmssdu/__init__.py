"""Multi-mask self-supervised training of physics-guided unrolled MRI reconstruction."""

__version__ = "1.0.0"
