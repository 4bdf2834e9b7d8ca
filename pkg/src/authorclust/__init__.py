"""Authorship clustering with a multi-headed character-level RNN.

One shared recurrent state, one softmax head per document: each head's
cross-entropy against every text becomes a pairwise affinity matrix,
which is turned into clusterings and ranked author links.
"""

__version__ = "0.1.0"
