import pytest
import torch


@pytest.fixture(scope="session")
def tiny_vit():
    """Randomly initialized ViT small enough for offline CI: N = 5 tokens."""
    from transformers import ViTConfig, ViTModel

    torch.manual_seed(0)
    config = ViTConfig(
        hidden_size=32,
        num_hidden_layers=3,
        num_attention_heads=2,
        intermediate_size=64,
        image_size=32,
        patch_size=16,
        attn_implementation="eager",
    )
    model = ViTModel(config, add_pooling_layer=False)
    model.eval()
    return model


@pytest.fixture
def pixel_values():
    torch.manual_seed(1)
    return torch.randn(1, 3, 32, 32)
