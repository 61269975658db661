from .basic import *
from .prox import *
from .auglag import *
from .metrics import *
from .util import *
