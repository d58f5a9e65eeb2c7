"""MQTT topic-filter matching on '/'-separated names."""

SINGLE = "+"
MULTI = "#"


def is_wildcard(name):
    return SINGLE in name or MULTI in name


def valid_filter(topic_filter):
    levels = topic_filter.split("/")
    for i, level in enumerate(levels):
        if MULTI in level and (level != MULTI or i != len(levels) - 1):
            return False
        if SINGLE in level and level != SINGLE:
            return False
    return True


def matches(topic_filter, name):
    """True if ``name`` (no wildcards) is selected by ``topic_filter``."""
    f = topic_filter.split("/")
    n = name.split("/")
    for i, level in enumerate(f):
        if level == MULTI:
            # '#' also matches the parent level itself
            return i <= len(n)
        if i >= len(n):
            return False
        if level != SINGLE and level != n[i]:
            return False
    return len(f) == len(n)
