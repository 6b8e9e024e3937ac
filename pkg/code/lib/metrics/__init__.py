from .classification import *
from .divergences import *
from .diversity import *
from .distribution import *
