"""Distribution primitives for the hybrid policy: categorical softmax,
Gaussian densities, KL divergences and cross-entropies, each with its exact
gradient with respect to the student parameters.

Conventions: categorical teachers are probability vectors, categorical
students are logits; Gaussians are (mean, sigma) with sigma > 0.  All
functions broadcast over a leading batch axis.
"""

import warnings

import numpy as np

PROB_FLOOR = 1e-8  # floor on probabilities inside log() to keep KL finite

LOG_2PI = float(np.log(2.0 * np.pi))


def softmax(logits, axis=-1):
    z = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    z = logits - np.max(logits, axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def kl_categorical(p, q, axis=-1):
    """Forward KL sum p log(p/q) >= 0.  q mass below 1e-8 where p > 0 is
    floored (and flagged with a warning) rather than returning inf."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if np.any((q < PROB_FLOOR) & (p > 0)):
        warnings.warn("kl_categorical: q mass floored at 1e-8", RuntimeWarning)
    q = np.maximum(q, PROB_FLOOR)
    terms = np.where(p > 0, p * (np.log(np.maximum(p, PROB_FLOOR)) - np.log(q)), 0.0)
    return terms.sum(axis=axis)


def kl_categorical_vs_logits(p, q_logits, axis=-1):
    """KL(p || softmax(q_logits)) computed from logits (no flooring needed)."""
    p = np.asarray(p, dtype=np.float64)
    logq = log_softmax(q_logits, axis=axis)
    plogp = np.where(p > 0, p * np.log(np.maximum(p, PROB_FLOOR)), 0.0)
    return plogp.sum(axis=axis) - (p * logq).sum(axis=axis)


def grad_kl_categorical_logits(p, q_logits):
    """d KL(p || softmax(q_logits)) / d q_logits = softmax(q_logits) - p."""
    return softmax(q_logits) - np.asarray(p, dtype=np.float64)


def kl_gaussian(mu_p, sigma_p, mu_q, sigma_q):
    """Closed-form KL(N(mu_p, sigma_p) || N(mu_q, sigma_q))."""
    mu_p, sigma_p = np.asarray(mu_p, float), np.asarray(sigma_p, float)
    mu_q, sigma_q = np.asarray(mu_q, float), np.asarray(sigma_q, float)
    return (np.log(sigma_q / sigma_p)
            + (sigma_p ** 2 + (mu_p - mu_q) ** 2) / (2.0 * sigma_q ** 2) - 0.5)


def grad_kl_gaussian_student(mu_p, sigma_p, mu_q, sigma_q):
    """Gradients of KL(p||q) w.r.t. the student's (mu_q, log sigma_q)."""
    d_mu = (mu_q - mu_p) / sigma_q ** 2
    d_logsig = 1.0 - (sigma_p ** 2 + (mu_p - mu_q) ** 2) / sigma_q ** 2
    return d_mu, d_logsig


def xent_categorical(p_teacher, q_logits, axis=-1):
    """Full-support cross-entropy -sum_a p(a) log softmax(q_logits)(a)."""
    p = np.asarray(p_teacher, dtype=np.float64)
    return -(p * log_softmax(q_logits, axis=axis)).sum(axis=axis)


def grad_xent_categorical_logits(p_teacher, q_logits):
    """d xent / d q_logits = softmax(q_logits) - p  (teacher sums to 1)."""
    return softmax(q_logits) - np.asarray(p_teacher, dtype=np.float64)


def xent_gaussian(mu_i, sigma_i, mu_g, sigma_g):
    """Cross-entropy of Gaussian teacher (mu_i, sigma_i) under Gaussian
    student (mu_g, sigma_g):

        0.5 log(2 pi sigma_g^2) + (sigma_i^2 + (mu_i - mu_g)^2) / (2 sigma_g^2)
    """
    mu_i, sigma_i = np.asarray(mu_i, float), np.asarray(sigma_i, float)
    mu_g, sigma_g = np.asarray(mu_g, float), np.asarray(sigma_g, float)
    return (0.5 * np.log(2.0 * np.pi * sigma_g ** 2)
            + (sigma_i ** 2 + (mu_i - mu_g) ** 2) / (2.0 * sigma_g ** 2))


def grad_xent_gaussian_student(mu_i, sigma_i, mu_g, sigma_g):
    """Gradients of xent_gaussian w.r.t. the student's (mu_g, log sigma_g)."""
    d_mu = (mu_g - mu_i) / sigma_g ** 2
    d_logsig = 1.0 - (sigma_i ** 2 + (mu_i - mu_g) ** 2) / sigma_g ** 2
    return d_mu, d_logsig


def categorical_entropy(p, axis=-1):
    p = np.asarray(p, dtype=np.float64)
    terms = np.where(p > 0, p * np.log(np.maximum(p, PROB_FLOOR)), 0.0)
    return -terms.sum(axis=axis)


def gaussian_log_prob(x, mu, sigma):
    """log N(x; mu, sigma)."""
    return -0.5 * LOG_2PI - np.log(sigma) - 0.5 * ((x - mu) / sigma) ** 2


def grad_gaussian_log_prob(x, mu, sigma):
    """Gradients of log N(x; mu, sigma) w.r.t. (mu, log sigma)."""
    z = (x - mu) / sigma
    return z / sigma, z * z - 1.0
