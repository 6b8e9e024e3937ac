from .vocabulary import *
from .wordpiece import *
from .encoding import *
