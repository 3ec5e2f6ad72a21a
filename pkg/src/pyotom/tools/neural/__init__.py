from __future__ import annotations

from .layers import *
from .models import *
from .optim import *
from .training import *
from .weights import saveModel, loadModel, loadHistory
