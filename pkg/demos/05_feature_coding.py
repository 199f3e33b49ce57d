"""Feature coding: the preprocessing side of the pipeline.

L2 normalization for holistic CNN features; PCA + an 8-dim box descriptor +
single-cluster VLAD for region features; averaged detector softmax as the
alternative region encoding; keyword question typing to route between them.
"""

import numpy as np

from dualpath import (
    QuestionType,
    RegionDescriptor,
    avg_region_softmax,
    classify_question,
    coordinate_vector,
    l2_normalize,
    pca_fit,
    pca_transform,
    route_features,
    vlad_center,
    vlad_one_cluster,
)

rng = np.random.default_rng(3)

# Holistic features are length-normalized before entering the model.
v = rng.normal(size=6) * 37.0
print("norm before/after:", np.linalg.norm(v).round(2), np.linalg.norm(l2_normalize(v)))

# Region descriptors: reduce CNN features with PCA, then append the
# normalized box geometry -> (k + 8)-dimensional region vectors.
region_feats = rng.normal(size=(40, 16)) @ rng.normal(size=(16, 16))  # correlated dims
pca = pca_fit(region_feats, k=4)
print("pca keeps", pca.k, "of", region_feats.shape[1], "dims; rows orthonormal:",
      np.allclose(pca.components @ pca.components.T, np.eye(4), atol=1e-10))

boxes = [(5, 5, 60, 40), (50, 30, 100, 90), (20, 60, 80, 100)]
regions = []
for feat, box in zip(region_feats, boxes):
    descriptor = RegionDescriptor(feature=feat, bbox=box, image_size=(100, 100))
    coded = np.concatenate([pca_transform(pca, descriptor.feature),
                            coordinate_vector(descriptor)])
    regions.append(coded)
    print(f"box {box}: region vector dim {coded.size} (pca {pca.k} + coords 8)")

# One-cluster VLAD aggregates all of an image's region vectors into one.
center = vlad_center(regions)
image_code = vlad_one_cluster(regions, center + 0.1)
print("vlad code dim:", image_code.size, "norm:", np.linalg.norm(image_code).round(6))

# The alternative encoding: average the detector's per-region softmax.
detector_probs = [rng.dirichlet(np.ones(7)) for _ in range(10)]
averaged = avg_region_softmax(detector_probs, expected_count=10)
print("averaged softmax sums to", averaged.sum().round(9))

# Question-type routing decides which encoding an example uses.
for question in ("How many trees?", "Is this a laptop?", "What fruit is yellow and brown?"):
    qtype = classify_question(question)
    chosen = route_features(qtype, averaged, image_code)
    which = "avg-softmax" if chosen is averaged else "vlad"
    print(f"{question:38} -> {qtype.name:7} -> {which}")
