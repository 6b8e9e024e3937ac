from .distribution_plots import *
from .utils import *
