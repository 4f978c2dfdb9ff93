from .manifest import SampleManifestEntry, Manifest, read_manifest, write_manifest, index_wav_corpus
from .corpus import ToySpeakerSpec, synth_speaker_utterance, mix_at_sir, build_toy_corpus
from .features import TrainingItem, prepare_item, load_training_items

__all__ = [
    "SampleManifestEntry",
    "Manifest",
    "read_manifest",
    "write_manifest",
    "index_wav_corpus",
    "ToySpeakerSpec",
    "synth_speaker_utterance",
    "mix_at_sir",
    "build_toy_corpus",
    "TrainingItem",
    "prepare_item",
    "load_training_items",
]
