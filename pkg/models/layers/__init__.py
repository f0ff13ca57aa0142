from .layers import (Dense, EdgeToEdgeConv, EdgeToEdgeDeconv, EdgeToNodeConv, GraphKernelLayer,
                     NodeToEdgeDeconv, NodeToGraph)
