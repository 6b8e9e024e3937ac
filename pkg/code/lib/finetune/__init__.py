from .tasks import *
from .finetune import *
