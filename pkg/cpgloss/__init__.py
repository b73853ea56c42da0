__version__ = "0.1.0"

from .maptype import *
from .tensorio import *
from .kernels import *
from .probmaps import *
from .gradfield import *
from .cpg import *
from .metrics import *
from .gradcheck import *
