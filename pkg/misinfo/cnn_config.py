"""CNN hyperparameters, kept free of torch so configs load without it."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, model_validator

CROSS_ENTROPY_EPOCHS = 500
SURROGATE_EPOCHS = 600

EmbedInit = Literal["random", "cbow", "fasttext"]
LossName = Literal["cross_entropy", "auc_surrogate"]


class CnnConfig(BaseModel):
    embed_dim: int = Field(200, ge=1)
    kernel_sizes: list[int] = Field(default_factory=lambda: [4, 5])
    filters_per_kernel: int = Field(100, ge=1)
    dropout: float = Field(0.5, ge=0.0, lt=1.0)
    max_sequence_length: int = Field(50, ge=1, description="Pad/truncate bound (right side)")
    vocab_size: int = Field(5000, ge=2, description="Embedding rows including padding and OOV")
    embed_init: EmbedInit = "random"
    trainable_embeddings: bool = True
    loss: LossName = "cross_entropy"
    epochs: int | None = Field(None, ge=0, description="Defaults to 500 (cross-entropy) or 600 (AUC surrogate)")
    batch: int = Field(32, ge=1)
    lr: float = Field(1e-3, ge=0.0)
    class_weight: Literal["balanced"] | None = None
    seed: int = 0

    @model_validator(mode="after")
    def _check_kernels(self) -> "CnnConfig":
        if not self.kernel_sizes or min(self.kernel_sizes) < 1:
            raise ValueError("kernel_sizes must be non-empty positive integers")
        if max(self.kernel_sizes) > self.max_sequence_length:
            raise ValueError("kernel size %d exceeds max_sequence_length %d" % (max(self.kernel_sizes), self.max_sequence_length))
        return self

    def resolved_epochs(self) -> int:
        if self.epochs is not None:
            return self.epochs
        return SURROGATE_EPOCHS if self.loss == "auc_surrogate" else CROSS_ENTROPY_EPOCHS
