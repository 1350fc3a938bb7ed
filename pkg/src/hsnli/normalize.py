"""Tweet text normalization applied before every model call.

URLs collapse to the literal token "https" and @-handles to "@user", matching
the conventions the Twitter-domain checkpoints were trained with. The function
is total and idempotent: normalized output passes through unchanged.
"""

import re

# A URL starts at a whitespace boundary with a scheme or "www." and runs to the
# next whitespace. The replacement "https" cannot itself match: the pattern
# requires "://" or a dot after the prefix.
_URL_RE = re.compile(r"(?<!\S)(?:https?://|www\.)\S*")

# Handles are "@" plus at least one word character at a whitespace boundary.
# "@user" maps to itself, so a second pass is a no-op.
_HANDLE_RE = re.compile(r"(?<!\S)@\w+")


def normalize(text: str) -> str:
    text = _URL_RE.sub("https", text)
    text = _HANDLE_RE.sub("@user", text)
    return text
