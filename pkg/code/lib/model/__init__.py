from .config import *
from .batch import *
from .lens_model import *
from .loss import *
from .scheduler import *
from .train import *
from .checkpoint import *
