# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

from .tensor import *  # noqa: F401,F403
from .models import *  # noqa: F401,F403
from .data import *  # noqa: F401,F403
from .attack import *  # noqa: F401,F403
from .training import *  # noqa: F401,F403
from .defense import *  # noqa: F401,F403
from .experiments import *  # noqa: F401,F403
from .misc import *  # noqa: F401,F403
from .tensor import __all__ as tensor_all
from .models import __all__ as models_all
from .data import __all__ as data_all
from .attack import __all__ as attack_all
from .training import __all__ as training_all
from .defense import __all__ as defense_all
from .experiments import __all__ as experiments_all
from .misc import __all__ as misc_all
from .version import __version__

# if somebody does "from shadowprint import *", this is what they will
# be able to access:
__all__ = tensor_all + models_all + data_all + attack_all + training_all + defense_all + experiments_all + misc_all
