"""Closed-form oscillation profiles for corrugation synthesis.

Every profile used by the engine has the form ``amp * trig(freq * t) + shift``
with ``trig`` either sine or cosine.  The class is closed under
differentiation, and closed under antidifferentiation for zero-mean profiles
(``shift == 0``), so arbitrarily long primitive chains keep exact closed
forms with uniformly bounded values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIN = "sin"
COS = "cos"


@dataclass(frozen=True)
class Profile:
    """A trigonometric profile ``amp * trig(freq * t) + shift``."""

    amp: float
    freq: float
    kind: str = SIN
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in (SIN, COS):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.freq <= 0:
            raise ValueError("profile frequency must be positive")

    def __call__(self, t: np.ndarray | float) -> np.ndarray | float:
        trig = np.sin if self.kind == SIN else np.cos
        return self.amp * trig(self.freq * np.asarray(t)) + self.shift

    def derivative(self) -> "Profile":
        if self.kind == SIN:
            return Profile(self.amp * self.freq, self.freq, COS)
        return Profile(-self.amp * self.freq, self.freq, SIN)

    def primitive(self) -> "Profile":
        """Antiderivative with zero integration constant.

        Only zero-mean profiles stay inside the closed-form family; a nonzero
        ``shift`` would pick up a linear-in-t term.
        """
        if self.shift != 0.0:
            raise ValueError("primitive of a profile with nonzero mean leaves the family")
        if self.kind == SIN:
            return Profile(-self.amp / self.freq, self.freq, COS)
        return Profile(self.amp / self.freq, self.freq, SIN)

    @property
    def bound(self) -> float:
        """Uniform bound sup_t |profile(t)|."""
        return abs(self.amp) + abs(self.shift)


def primitive_chain(base: Profile, depth: int) -> list[Profile]:
    """Return ``[p_0, p_1, ..., p_depth]`` with ``p_{i+1}' = p_i`` and ``p_0 = base``."""
    chain = [base]
    for _ in range(depth):
        chain.append(chain[-1].primitive())
    return chain


# The corrugation profile family.  CORRUGATION drives the normal displacement;
# TANGENTIAL_QUAD and TANGENTIAL_GRAD weight the two compensating tangential
# terms; ENVELOPE is the profile multiplying the grad-a outer product in the
# single-step residual identity.  The three pointwise identities
#   (1/2) CORRUGATION'^2 + TANGENTIAL_QUAD'   = 1
#   CORRUGATION' CORRUGATION + 2 TANGENTIAL_QUAD + TANGENTIAL_GRAD' = 0
#   (1/2) CORRUGATION^2 + TANGENTIAL_GRAD     = ENVELOPE
# are exactly the cancellation mechanism of the step construction.
CORRUGATION = Profile(2.0, 1.0, SIN)
TANGENTIAL_QUAD = Profile(-0.5, 2.0, SIN)
TANGENTIAL_GRAD = Profile(0.5, 2.0, COS)
ENVELOPE = Profile(-0.5, 2.0, COS, shift=1.0)
# Zero-mean part of ENVELOPE; the only form of it that enters primitive chains.
ENVELOPE_OSC = Profile(-0.5, 2.0, COS)
