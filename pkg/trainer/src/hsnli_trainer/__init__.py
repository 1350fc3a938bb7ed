"""Training-side companion package: runs fine-tuning phase plans on tiny or
full-size checkpoints and exports models in the portable backend directory
format the classification engine consumes. Talks to the engine only through
files (JSONL corpora in, model directories and training logs out)."""
