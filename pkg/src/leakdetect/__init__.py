"""Leak detection from industrial PSD spectrograms with sub-band features and an SMO-trained SVM."""

__version__ = "0.1.0"
