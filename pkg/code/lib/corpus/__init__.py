from .sampling import *
from .builder import *
from .io import *
