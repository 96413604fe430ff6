"""Covert-content email attack toolkit: forge, simulate, guard.

Builds the hidden-ciphertext and conditional-CSS attack emails, simulates how
email-client behavior classes render and quote them (demonstrating decryption
and signing oracle leakage), and ships the matching detector/sanitizer
countermeasures. All cryptography is a bit-exact mock behind a provider
interface; nothing here touches real keys.
"""

__version__ = "0.1.0"
