"""embexport: run a pretrained vision-language encoder over an image folder
and write EMB1 embedding files for the selection engine to consume."""

from .emb1 import KIND_IMAGE, KIND_TEXT, write_emb1
from .encoders import EncoderError, HashEncoder, load_encoder
from .export import DEFAULT_MODEL, DEFAULT_TEMPLATE, ExportJob, ExportResult, run_export

__version__ = "0.1.0"
