"""
Anatomy of the span contrastive objective
=========================================

Walks one handcrafted batch of six pooled span embeddings through the
objective: similarity logits, hard-negative selection, the regular and
hard per-anchor losses, and their batch average.
"""

import numpy as np
import torch

from contraspan.objective import (
    HARD_NEGATIVE_WEIGHT,
    ContrastiveConfig,
    SpanBatch,
    similarity_logits,
    span_contrastive_hard,
    span_contrastive_loss,
    span_contrastive_regular,
    topk_hard_negatives,
)

# two figurative spans among four ordinary ones
labels = ["idiom", "O", "O", "O", "idiom", "O"]
rng = np.random.default_rng(7)
z = torch.as_tensor(rng.normal(size=(6, 8)))
z = z / z.norm(dim=1, keepdim=True)

config = ContrastiveConfig(temperature=0.1, top_k=2)
logits = similarity_logits(z, config.temperature)
print("similarity logits (z_i . z_j / tau):")
print(np.array2string(logits.numpy(), precision=2, suppress_small=True))

# each anchor ranks the spans with a different label by similarity
picks = topk_hard_negatives(logits, labels, config.top_k)
for i, chosen in enumerate(picks):
    print(f"anchor {i} ({labels[i]:<5}) hardest negatives: {chosen}")

# the regular loss scores positives against every other span; the hard
# variant re-adds the selected negatives so each counts twice
regular, eligible = span_contrastive_regular(logits, labels)
hard, _ = span_contrastive_hard(logits, labels, config.top_k)
print(f"\nhard-negative weight: {HARD_NEGATIVE_WEIGHT}")
print("anchor  eligible  regular   hard")
for i in range(len(labels)):
    print(f"{i:>6}  {str(bool(eligible[i])):<8}  {regular[i]:.4f}    {hard[i]:.4f}")

# the batch loss averages (regular + hard) / 2 over eligible anchors
span, reg_mean, hard_mean, count = span_contrastive_loss(SpanBatch(z, labels), config)
print(f"\neligible anchors: {count}")
print(f"regular mean {reg_mean:.6f}, hard mean {hard_mean:.6f}, combined {span:.6f}")
assert float(span) == (float(reg_mean) + float(hard_mean)) / 2
