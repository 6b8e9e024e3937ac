from .pcap import *
from .flows import *
from .hex_units import *
from .archive import *
