from .base import *
from .lalm import LALM, LalmState
from .blalm import BLALM, BlockState, pick_block
from .pdyn import PDYN, PdynState
from . import lalm, blalm, pdyn

SOLVERS = {'lalm': LALM, 'blalm': BLALM, 'pdyn': PDYN}
