# Voice activity detection over RMS windows
# ------------------------------------------
#
# The gateway never sees a continuous microphone stream. The robot runs this
# same segmentation client-side and ships only the speech, fragment by
# fragment. Here we synthesize two seconds of "speech" inside five seconds of
# quiet and watch the detector find it.

import numpy as np

from sar_gateway import audio

RATE = 16000

rng = np.random.default_rng(7)
quiet = 0.002 * rng.standard_normal(RATE)            # room noise, far below threshold
tone = 0.4 * np.sin(2 * np.pi * 220 * np.arange(2 * RATE) / RATE)
signal = np.concatenate([quiet, tone, quiet, quiet])

# Energy is measured as RMS over fixed 0.1 s windows.

for second in (0, 1, 3):
    window = signal[second * RATE : second * RATE + audio.window_length(RATE)]
    print(f"t={second}s rms={audio.compute_rms(window):.4f}")

# The detector is a small hysteresis machine: speech starts when a window
# crosses 0.02, and stops only after 5 consecutive windows below 0.01
# (the hangover), so short pauses inside a sentence do not split it.

state = audio.VadState()
for i, window in enumerate(audio.iter_windows(signal, RATE)):
    state, event = audio.vad_step(state, audio.compute_rms(window))
    if event is not None:
        print(f"{event} at t={i / audio.WINDOWS_PER_SECOND:.1f}s")

# VadSegmenter wraps that loop and yields one sample array per utterance,
# with the trailing hangover already trimmed.

utterances = list(audio.VadSegmenter().segment(signal, RATE))
print("utterances:", [f"{u.size / RATE:.1f}s" for u in utterances])

# For transport each utterance is cut into fixed-size fragments. Order is
# carried by an explicit index, so delivery order does not matter.

fragments = audio.fragment(utterances[0], 8000, "u0")
print("fragments:", [(f.index, f.samples.size) for f in fragments])

out_of_order = [fragments[2], fragments[0], fragments[1], fragments[3]]
restored = audio.reassemble(out_of_order, declared_count=len(fragments))
print("reassembled exactly:", np.array_equal(restored, utterances[0]))

# Reassembly refuses to guess. A missing fragment, a duplicate, or a count
# that disagrees with the indices each raise a distinct error; the gateway
# answers all of them with a retry prompt rather than transcribing garbage.

try:
    audio.reassemble(fragments[:-1], declared_count=len(fragments))
except audio.IncompleteUtterance as exc:
    print("incomplete:", exc)

# Samples cross the wire as little-endian 16-bit PCM. The float encoding is
# chosen so a decode/encode pair is byte-exact.

pcm = audio.floats_to_pcm16(utterances[0])
again = audio.floats_to_pcm16(audio.pcm16_to_floats(pcm))
print("pcm roundtrip byte-exact:", pcm == again)
