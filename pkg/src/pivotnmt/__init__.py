"""pivotnmt: a desk-scale pivot-cascade machine translation toolkit.

Preprocessing, BPE subwords, a from-scratch numpy Transformer with exact
gradients, two-stage pivot translation, and case-sensitive corpus BLEU.
"""

__version__ = "0.1.0"
