from __future__ import annotations

from . import bloch, schedule, dataset, neural, fit, phantom, images
