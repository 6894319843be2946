"""Package information"""

__project__ = 'causal-gnn'
__summary__ = 'Causal graph neural networks for wildfire danger forecasting'
__webpage__ = 'https://github.com/causal-gnn/causal-gnn'

__version__ = '1.0.0'

__author__ = 'Causal GNN developers'
__email__ = 'causal-gnn@users.noreply.github.com'

__license__ = 'LGPL'
__copyright__ = 'Copyright 2024-2026 {}'.format(__author__)
