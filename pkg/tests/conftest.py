import io
import wave

import numpy as np
import pytest

from impactsound import spectral, synth
from impactsound.features import build_feature_matrix


def reference_wav(samples_int16, rate=44100, channels=1):
    """WAV bytes written by the standard-library encoder."""
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(np.asarray(samples_int16, dtype="<i2").tobytes())
    return buf.getvalue()


@pytest.fixture(scope="session")
def slab_902():
    dataset, truth = synth.generate(synth.SlabSpec())
    return dataset, truth


@pytest.fixture(scope="session")
def slab_features(slab_902):
    dataset, truth = slab_902
    spectra = [spectral.one_sided_spectrum(r) for r in dataset.recordings]
    return build_feature_matrix(dataset, spectra), truth
