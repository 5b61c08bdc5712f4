"""Neural actor-critic variant for continuous state spaces."""
