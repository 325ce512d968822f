from .model import *
from .metrics import *
from .posterior import *
from .search import *
from .graphs import *
from .simgen import *
from .evaluation import *
