"""Hardware-constrained spiking neural networks for MNIST, from training to VHDL."""

__version__ = "0.1.0"
