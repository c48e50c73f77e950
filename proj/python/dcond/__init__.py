"""Python bindings for the dcond diphone-marginalized CTC toolkit."""

from ._core import (
    PHONEMES,
    DecoderModel,
    Error,
    InvalidArgument,
    IoError,
    NGramModel,
    OutOfVocabulary,
    ParseError,
    SubclassTable,
    Unalignable,
    __version__,
    best_path_decode,
    collapse_diphones,
    combined_loss,
    ctc_loss,
    ctc_loss_bruteforce,
    diphone_index,
    edit_distance,
    expand_diphones,
    marginalize,
    p_wer,
    parse_phonemes,
    run_cli,
    system_prompt,
)


def main() -> int:
    """Console entry point mirroring the native `dcond` tool."""
    import sys

    code, out, err = run_cli(sys.argv[1:])
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
