import torch

DTYPE = torch.float64

WORLD_UP = torch.tensor([0.0, 1.0, 0.0], dtype=DTYPE)
X_AXIS = torch.tensor([1.0, 0.0, 0.0], dtype=DTYPE)
Z_AXIS = torch.tensor([0.0, 0.0, 1.0], dtype=DTYPE)
