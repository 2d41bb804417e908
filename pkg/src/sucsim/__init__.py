"""sucsim: involutive ciphers built from random S-boxes, with the device
lifecycle and challenge-response machinery around them.

The package splits into a cipher workbench (sbox4, sbox8, cipher), the
device side (entropy, device), the verifier side (authority, netlink),
and the measurement harness (analysis).
"""

__version__ = "0.1.0"
