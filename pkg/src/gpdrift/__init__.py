"""Maximum-likelihood drift estimation for X_t = theta * G(t) + B_t with Gaussian noise B."""

__version__ = "0.1.0"
