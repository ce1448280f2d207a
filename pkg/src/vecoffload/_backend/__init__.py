"""Kernel backend selection.

The compiled extension is preferred when importable; setting the environment
variable ``VECOFFLOAD_PURE`` to any non-empty value forces the numpy
reference implementation.  ``BACKEND`` names the active choice.
"""

import os

if os.environ.get("VECOFFLOAD_PURE"):
    from . import pure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _fast as _impl

        BACKEND = "fast"
    except ImportError:
        from . import pure as _impl

        BACKEND = "pure"

policy_forward = _impl.policy_forward
value_forward = _impl.value_forward
actor_backward = _impl.actor_backward
critic_backward = _impl.critic_backward

__all__ = [
    "BACKEND",
    "policy_forward",
    "value_forward",
    "actor_backward",
    "critic_backward",
]
