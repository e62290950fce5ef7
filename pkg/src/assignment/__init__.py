"""
Hungarian assignment and optimal label mapping
"""

from .hungarian import solve, assignment_cost, optimal_label_mapping

__all__ = ['solve', 'assignment_cost', 'optimal_label_mapping']
