from . import test_acceptance
from . import test_bloch
from . import test_cli
from . import test_config
from . import test_dataset
from . import test_env
from . import test_fit
from . import test_images
from . import test_logger
from . import test_neural
from . import test_phantom
from . import test_rng
from . import test_schedule
from . import test_training
from . import test_utils
