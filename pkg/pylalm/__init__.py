from .main import *
from . import instances, model, solvers
