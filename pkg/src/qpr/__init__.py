"""Quantum phase recognition with fidelity kernels and the kernel Alphatron."""
