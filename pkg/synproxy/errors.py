class SynproxyError(Exception):
    pass


class MalformedFrame(SynproxyError, ValueError):
    pass


class OversizeSegment(SynproxyError, ValueError):
    pass


class UnsupportedCapture(SynproxyError, ValueError):
    pass


class TruncatedFile(SynproxyError, ValueError):
    pass


class CookieRejected(SynproxyError, ValueError):
    """Base of the two ways a cookie check fails. Both mean: drop, create no state."""
    reason = 'CookieRejected'


class StaleCookie(CookieRejected):
    reason = 'StaleCookie'


class BadHash(CookieRejected):
    reason = 'BadHash'


class CapacityExceeded(SynproxyError):
    pass


class NoMatchingSplice(SynproxyError):
    pass


class ConfigInvalid(SynproxyError, ValueError):

    def __init__(self, key, message):
        self.key = key
        super().__init__('{}: {}'.format(key, message))
