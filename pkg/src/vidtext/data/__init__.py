from .corpus import CorpusItem, load_corpus, read_manifest, write_manifest
from .sampling import SamplingConfig, VideoMeta, sample_frames, select_indices
from .synthetic import generate_synthetic_corpus
from .tensorio import decode_tensor, encode_tensor, read_tensor_file, write_tensor_file
