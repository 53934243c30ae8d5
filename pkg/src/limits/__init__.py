"""Limit studies: p to infinity, penalty eps to zero, and continuous dependence."""
