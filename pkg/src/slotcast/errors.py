# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================


class SlotcastError(Exception):
    """base for everything the library raises on purpose"""


# text + features --- {{{
class EmptyCorpus(SlotcastError):
    pass


class DegenerateInput(SlotcastError):
    pass


class DimensionMismatch(SlotcastError):
    pass


class StateNotFitted(SlotcastError):
    pass


# }}}


# training + inference --- {{{
class TooFewSamples(SlotcastError):
    pass


class NonFiniteTarget(SlotcastError):
    pass


class NegativeTarget(SlotcastError):
    pass


class BundleVersionMismatch(SlotcastError):
    pass


class CorruptBundle(SlotcastError):
    pass


class IoError(SlotcastError, OSError):
    """file could not be read or written; still an OSError for callers"""


# }}}


# evaluation, synth, ingest --- {{{
class LengthMismatch(SlotcastError):
    pass


class EmptyInput(SlotcastError):
    pass


class InvalidValues(SlotcastError):
    """negative actuals, or values that are not finite"""


class InvalidConfig(SlotcastError):
    pass


class OverlappingEnvironments(SlotcastError):
    pass


class MalformedRecord(SlotcastError):
    def __init__(self, lineno, reason):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


# }}}

# done.
