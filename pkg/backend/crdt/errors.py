"""
Errors raised while validating or applying CRDT operations
"""


class CrdtError(ValueError):
    """Base class for CRDT engine errors"""


class TypeMismatch(CrdtError):
    """Operation type disagrees with the node already stored at its path"""


class MalformedOperation(CrdtError):
    """Operation violates the constraints of its CRDT type"""
