"""
LazyGNN - shallow GNN capturing long-distance dependency via lazy propagation
"""

__version__ = "0.3.0"
__author__ = "Bashirov"
