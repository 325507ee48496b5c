__version__ = "0.1.0"
__author__ = "nhmm developers"
__description__ = "bayesian non-homogeneous hidden markov models for daily rainfall"
