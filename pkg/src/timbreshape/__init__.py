"""Cover song scoring from sequences of timbral shape descriptors.

Beat-synchronous blocks of audio become sliding-window MFCC point clouds,
each summarised by a normalised self-similarity image. Two songs are compared
through a mutual nearest-neighbour binary cross-similarity matrix scored by a
near-diagonal Smith-Waterman alignment.
"""

__version__ = "0.1.0"
