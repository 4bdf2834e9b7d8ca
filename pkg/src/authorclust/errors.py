"""Exception types raised across the pipeline."""


class AuthorclustError(Exception):
    """Base class for all errors raised by this package."""


# --- text preprocessing ---

class EmptyCorpusError(AuthorclustError):
    """Alphabet construction saw zero tokens."""


class EmptyAlphabetError(AuthorclustError):
    """No token met the frequency threshold."""


# --- corpus loading ---

class MissingDirectoryError(AuthorclustError):
    pass


class NonUtf8FileError(AuthorclustError):
    """A document is not valid UTF-8.  Hard error, never skipped."""


class EmptyProblemError(AuthorclustError):
    pass


class InsufficientControlsError(AuthorclustError):
    pass


# --- model ---

class DocTooShortError(AuthorclustError):
    """Cross-entropy needs at least two symbols."""


class NonFiniteLossError(AuthorclustError):
    """Training diverged; try a lower learning rate."""


class VersionMismatchError(AuthorclustError):
    pass


class CorruptFileError(AuthorclustError):
    pass


# --- matrices ---

class ShapeMismatchError(AuthorclustError):
    pass


class IdMismatchError(AuthorclustError):
    pass


class NoControlsError(AuthorclustError):
    pass


# --- clustering ---

class DegenerateAnchorsError(AuthorclustError):
    """Cliff anchor ended up above the diagonal anchor."""


# --- metrics ---

class UniverseMismatchError(AuthorclustError):
    pass


class NoTrueLinksError(AuthorclustError):
    """Truth has no same-cluster pair, so MAP is undefined."""


class MissingTruthError(AuthorclustError):
    pass
