"""Transform-domain image steganography with RSA payloads, OPAP and an RS shield."""

__version__ = "0.1.0"
