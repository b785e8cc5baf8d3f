# coding: utf-8

# # Turning articles into class vectors
#
# Two encoders are available. A bag of word embeddings averages the vectors
# of every known token. For models with a fixed input length, long articles
# are cut into overlapping windows of 256 tokens, and the per-window features
# are averaged.

import numpy as np

from zslforge import text_encoding as te

table = te.EmbeddingTable({
    "zebra": np.array([1.0, 0.0, 0.0]),
    "stripes": np.array([0.0, 1.0, 0.0]),
    "horse": np.array([0.0, 0.0, 1.0]),
}, 3)
enc = te.BagOfEmbeddings(table)
articles = [("Zebra", "The zebra is a striped horse. Zebra stripes are unique.")]
encoded = te.encode_class("n02391049", articles, enc)
print("vector:", encoded.vector, "tokens used:", encoded.n_tokens_in_vocab)


# ## Chunk windows
#
# Consecutive windows overlap by 50 tokens; the last one may be short.

for n in (10, 256, 463, 1000):
    print(n, te.plan_chunks(n).spans)
