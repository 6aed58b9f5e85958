"""SuperPoint network: shared VGG-style encoder with a 65-channel detector
head (8x8 cells plus dustbin) and a 256-dim descriptor head.

The layer names match the published pretrained checkpoint, so
`load_state_dict(torch.load(path), strict=True)` accepts the reference
weights and rejects anything with a different architecture.
"""

import torch
from torch import nn

DESCRIPTOR_DIM = 256
CELL = 8  # detector output stride


class SuperPointNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.relu = nn.ReLU(inplace=True)
        self.pool = nn.MaxPool2d(kernel_size=2, stride=2)
        c1, c2, c3, c4, c5 = 64, 64, 128, 128, 256
        self.conv1a = nn.Conv2d(1, c1, kernel_size=3, stride=1, padding=1)
        self.conv1b = nn.Conv2d(c1, c1, kernel_size=3, stride=1, padding=1)
        self.conv2a = nn.Conv2d(c1, c2, kernel_size=3, stride=1, padding=1)
        self.conv2b = nn.Conv2d(c2, c2, kernel_size=3, stride=1, padding=1)
        self.conv3a = nn.Conv2d(c2, c3, kernel_size=3, stride=1, padding=1)
        self.conv3b = nn.Conv2d(c3, c3, kernel_size=3, stride=1, padding=1)
        self.conv4a = nn.Conv2d(c3, c4, kernel_size=3, stride=1, padding=1)
        self.conv4b = nn.Conv2d(c4, c4, kernel_size=3, stride=1, padding=1)
        self.convPa = nn.Conv2d(c4, c5, kernel_size=3, stride=1, padding=1)
        self.convPb = nn.Conv2d(c5, 65, kernel_size=1, stride=1, padding=0)
        self.convDa = nn.Conv2d(c4, c5, kernel_size=3, stride=1, padding=1)
        self.convDb = nn.Conv2d(c5, DESCRIPTOR_DIM, kernel_size=1, stride=1, padding=0)

    def forward(self, image: torch.Tensor):
        """image (b, 1, h, w) in [0, 1] -> (semi (b, 65, h/8, w/8), desc map)."""
        x = self.relu(self.conv1a(image))
        x = self.relu(self.conv1b(x))
        x = self.pool(x)
        x = self.relu(self.conv2a(x))
        x = self.relu(self.conv2b(x))
        x = self.pool(x)
        x = self.relu(self.conv3a(x))
        x = self.relu(self.conv3b(x))
        x = self.pool(x)
        x = self.relu(self.conv4a(x))
        x = self.relu(self.conv4b(x))
        semi = self.convPb(self.relu(self.convPa(x)))
        desc = self.convDb(self.relu(self.convDa(x)))
        desc = torch.nn.functional.normalize(desc, p=2, dim=1)
        return semi, desc


def heatmap_from_semi(semi: torch.Tensor) -> torch.Tensor:
    """(b, 65, hc, wc) detector logits -> (b, hc*8, wc*8) probability heatmap."""
    dense = torch.softmax(semi, dim=1)[:, :-1]  # drop the dustbin channel
    b, _, hc, wc = dense.shape
    heat = dense.permute(0, 2, 3, 1).reshape(b, hc, wc, CELL, CELL)
    return heat.permute(0, 1, 3, 2, 4).reshape(b, hc * CELL, wc * CELL)


def simple_nms(scores: torch.Tensor, radius: int) -> torch.Tensor:
    """Suppress everything that is not the maximum of its (2r+1)^2 window."""
    if radius <= 0:
        return scores

    def max_pool(x):
        return torch.nn.functional.max_pool2d(
            x, kernel_size=radius * 2 + 1, stride=1, padding=radius
        )

    zeros = torch.zeros_like(scores)
    max_mask = scores == max_pool(scores)
    for _ in range(2):
        supp_mask = max_pool(max_mask.float()) > 0
        supp_scores = torch.where(supp_mask, zeros, scores)
        new_max_mask = supp_scores == max_pool(supp_scores)
        max_mask = max_mask | (new_max_mask & (~supp_mask))
    return torch.where(max_mask, scores, zeros)


def sample_descriptors(
    keypoints: torch.Tensor, desc_map: torch.Tensor, stride: int = CELL
) -> torch.Tensor:
    """Bilinearly interpolate unit descriptors at (n, 2) pixel locations."""
    _, _, hc, wc = desc_map.shape
    pts = keypoints - stride / 2 + 0.5
    denom = torch.tensor(
        [wc * stride - stride / 2 - 0.5, hc * stride - stride / 2 - 0.5],
        dtype=pts.dtype, device=pts.device,
    )
    pts = (pts / denom) * 2 - 1
    sampled = torch.nn.functional.grid_sample(
        desc_map, pts.view(1, 1, -1, 2), mode="bilinear", align_corners=True
    )
    sampled = sampled.reshape(desc_map.shape[1], -1).t()
    return torch.nn.functional.normalize(sampled, p=2, dim=1)
