# Lexicon sentiment scoring
# -------------------------
#
# Transcripts get a sentiment score in [0, 1] from plain word counting:
# score = (1 + (P - N) / (P + N)) / 2 over lexicon hits, and 0.5 when no
# token hits at all. Deterministic, explainable, fast.

from sar_gateway.backends import Lexicon, tokenize
from sar_gateway.behavior import sentiment_band

lexicon = Lexicon.default()

print("tokenize keeps apostrophes, drops punctuation:")
print("  ", tokenize("I'm SO happy, really-really happy 2day!"))

for text in (
    "i am happy",
    "this is sad and terrible",
    "the robot is blue",
    "good good good bad",
):
    score = lexicon.score(text)
    print(f"{text!r:38} -> {score.value:.3f} ({sentiment_band(score)})")

# The band thresholds are part of the behavior contract: scores below 0.4
# count as Negative, above 0.6 as Positive, and everything between
# (inclusive on both ends) as Neutral. The gateway picks its spoken reply
# from a per-band phrase list, round-robin, so repeated neutral answers do
# not repeat the same sentence.

from sar_gateway.backends import SentimentScore

for value in (0.39, 0.40, 0.60, 0.61):
    print(f"band({value}) = {sentiment_band(SentimentScore(value))}")
