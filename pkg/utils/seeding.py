import random

import numpy as np
import torch


def seed_everything(seed: int):
    """Seed python, numpy and torch and force deterministic kernels"""
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.backends.cudnn.deterministic = True
    torch.backends.cudnn.benchmark = False


def make_generator(seed: int, device: torch.device = None) -> torch.Generator:
    """A torch.Generator on `device` seeded with `seed`"""
    generator = torch.Generator(device=device or "cpu")
    generator.manual_seed(int(seed))
    return generator


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit child seed for (seed, *keys)"""
    sequence = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
