"""Exception types shared across the toolkit."""


class UrgentForgeError(Exception):
    """Base class for all toolkit errors."""


class AudioFormatError(UrgentForgeError):
    """Malformed or unsupported audio container."""


class ChannelCountError(AudioFormatError):
    """Audio file is not single-channel."""


class EncodingError(AudioFormatError):
    """Sample encoding is not one of the supported codes."""


class SilentSignalError(UrgentForgeError):
    """Operation undefined on (near-)digital silence."""


class DegenerateSignalError(UrgentForgeError):
    """A mix component (speech, noise, or RIR) carries no energy."""


class MissingScoreError(UrgentForgeError):
    """A quality score or activity ratio required by the policy is absent."""


class ShortSignalError(UrgentForgeError):
    """Signal too short for the analysis it was handed to."""


class ConfigError(UrgentForgeError):
    """Invalid or inconsistent configuration."""
