"""Adversarial learning of Nash play across random bimatrix games."""
