"""Domain records: bit strings, embeddings, helper data, epochs and HE envelopes."""
