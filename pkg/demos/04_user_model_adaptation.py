"""
The per-child user model and script adaptation
===============================================

Every successful emotion recognition feeds an exponentially weighted moving
average profile over the six basic emotions. The profile drives a single
mood scalar (valence) which in turn selects which behavior script the robot
runs. This script walks one child through a rough day and a better one.
"""
import tempfile
from pathlib import Path

from sar_gateway.backends import EmotionScores
from sar_gateway.config import DEFAULT_SCRIPTS
from sar_gateway.user_model import (
    BehaviorScript,
    ModelStore,
    UserModel,
    choose_script,
    mood_valence,
    observe_emotion,
)

EMOTIONS = ("happiness", "sadness", "surprise", "fear", "anger", "disgust")


def scores(**kw) -> EmotionScores:
    table = {name: 0.05 for name in EMOTIONS}
    table.update(kw)
    return EmotionScores.from_dict(table, service="mock")


# A fresh model has no profile at all; the first observation seeds it
# verbatim instead of averaging against an invented prior.

model = UserModel(child_id="kid-7")
model = observe_emotion(model, scores(sadness=0.8), ts=0.0)
print("after first observation:", {k: round(v, 3) for k, v in model.emotion_profile.items()})

# From then on each entry moves by alpha=0.3 toward the new observation, so
# old evidence decays geometrically. Watch sadness fade as happier readings
# arrive:

for step in range(1, 6):
    model = observe_emotion(model, scores(happiness=0.9), ts=float(step))
    print(f"step {step}: sadness={model.emotion_profile['sadness']:.3f} "
          f"happiness={model.emotion_profile['happiness']:.3f} "
          f"valence={mood_valence(model):+.3f}")

# Valence weighs the profile (happiness up, sadness and the threat emotions
# down, surprise mildly up) and clamps to [-1, 1]. Scripts declare the mood
# range they suit; selection prefers a range match and falls back to the
# nearest midpoint.

library = [BehaviorScript.from_dict(s) for s in DEFAULT_SCRIPTS]
for script in library:
    print(f"  {script.script_id:16} range=({script.mood_range[0]:+.1f}, {script.mood_range[1]:+.1f})")

print("chosen for current mood:", choose_script(library, model).script_id)

gloomy = UserModel(child_id="kid-8")
gloomy = observe_emotion(gloomy, scores(sadness=0.9, fear=0.6), ts=0.0)
print(f"gloomy valence {mood_valence(gloomy):+.3f} ->",
      choose_script(library, gloomy).script_id)

# Models persist as one JSON file per child. Updates go through a
# read-modify-write callback under a per-child lock, so concurrent sessions
# for the same child cannot trample each other's counts.

with tempfile.TemporaryDirectory() as tmp:
    store = ModelStore(Path(tmp) / "models")
    snapshot = model
    store.update("kid-7", lambda current: snapshot)
    loaded = store.load("kid-7")
    print("persisted observation_count:", loaded.observation_count)
    print("files:", sorted(p.name for p in (Path(tmp) / "models").iterdir()))
