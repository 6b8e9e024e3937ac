""" Diversity Ratio of generated header fields: the number of distinct valid 
values divided by the number of generated values."""

import ipaddress
from enum import Enum

from ..errors import EmptyList

MAX_PORT = 65535
MAX_LEN = 65535

class FieldKind(str, Enum):
    IP = "ip"
    PORT = "port"
    LEN = "len"

def parse_ip(value):
    try:
        return str(ipaddress.IPv4Address(value.strip()))
    except ValueError:
        return None

def parse_bounded_int(value, upper):
    value = value.strip()
    # str.isdigit also accepts superscripts and non-ASCII digits
    if not (value.isascii() and value.isdecimal()):
        return None
    number = int(value)
    return number if number <= upper else None

def parse_field(value, kind):
    """Canonical form of a valid field value, None when invalid."""

    kind = FieldKind(kind)
    if kind == FieldKind.IP:
        return parse_ip(value)
    return parse_bounded_int(value, MAX_PORT if kind == FieldKind.PORT else MAX_LEN)

def dr(generated, kind):
    if len(generated) == 0:
        raise EmptyList("Cannot compute the diversity ratio of an empty list.")
    valid = {parse_field(str(v), kind) for v in generated} - {None}
    return len(valid) / len(generated)
