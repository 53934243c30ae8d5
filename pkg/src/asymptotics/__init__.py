"""Large-time behaviour: decay of |h(t) - h_inf|^2 toward the stationary state."""
